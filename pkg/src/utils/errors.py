from __future__ import annotations


class ConfigError(ValueError):
    """Invalid experiment configuration; the CLI exits with code 2."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class PointSetFormatError(ValueError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


class PointSetValidationError(ValueError):
    pass


class ZonalAlgebraError(ValueError):
    pass


class IncompatibleOperatorError(ValueError):
    pass


class NumericalError(RuntimeError):
    """Root of computational failures; the CLI exits with code 3."""


class SingularMatrixError(NumericalError):
    def __init__(self, message: str, pivot: float):
        super().__init__(f"{message} (pivot magnitude {pivot:.3e})")
        self.pivot = pivot


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, message: str, eigenvalue: float):
        super().__init__(f"{message} (smallest eigenvalue {eigenvalue:.3e})")
        self.eigenvalue = eigenvalue


class UnisolvencyError(NumericalError):
    pass


class LocalUnisolvencyError(UnisolvencyError):
    def __init__(self, index: int, message: str):
        super().__init__(f"stencil {index}: {message}; increase the stencil size")
        self.index = index


class CPDViolationError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    pass


class ConsistencyError(NumericalError):
    pass


class CoincidentPointsError(NumericalError):
    pass


class BlowUpError(NumericalError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step
