from __future__ import annotations

from typing import List, Sequence

import numpy as np

ENERGY_SLACK_ABS = 1e-12
BOUND_SLACK = 1.0 + 1e-6


def increases(values: Sequence[float], slack: float = ENERGY_SLACK_ABS) -> List[int]:
    """Indices i with values[i] > values[i-1] + slack."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return []
    return [int(i) + 1 for i in np.flatnonzero(np.diff(v) > slack)]


def adjacent_inversions(values: Sequence[float]) -> int:
    """Number of adjacent pairs breaking a strictly decreasing sequence."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) >= 0)) if v.size > 1 else 0


def dominates(bound: float, observed: float, factor: float = BOUND_SLACK) -> bool:
    return observed <= bound * factor + np.finfo(float).tiny
