from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from utils.errors import (
    ConfigError,
    IncompatibleOperatorError,
    NumericalError,
    PointSetFormatError,
    PointSetValidationError,
    ZonalAlgebraError,
)
from utils.log import setup_logging

from .config import Experiment, load_config, validate
from .runner import run

log = logging.getLogger("kdm.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_SUBCOMMANDS = {
    "points": Experiment.POINTS,
    "dm": Experiment.DM,
    "spectra": Experiment.SPECTRA,
    "rnorm": Experiment.RNORM,
    "localdist": Experiment.LOCALDIST,
    "energy": Experiment.ENERGY,
    "report": Experiment.DECOMP_REPORT,
}

_CONFIG_ERRORS = (
    ConfigError,
    IncompatibleOperatorError,
    PointSetFormatError,
    PointSetValidationError,
    ZonalAlgebraError,
)
# LinAlgError subclasses ValueError, so this group is tried before the ValueError fallback
_NUMERICAL_ERRORS = (NumericalError, np.linalg.LinAlgError, ArithmeticError)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="YAML experiment config")
    p.add_argument("--log-level", default=None)
    p.add_argument("--family", default=None, choices=["fibonacci", "hammersley", "min_energy", "file"])
    p.add_argument("--N", dest="N", default=None, help="point count or comma-separated list")
    p.add_argument("--kernel", default=None, help="'ss:m=3' or 'imq:eps=2.0'")
    p.add_argument("--operator", default=None, help="'p=0,-1' means p(x) = -x")
    p.add_argument("--mtilde", type=int, default=None)
    p.add_argument("--mtilde-sweep", dest="mtilde_sweep", default=None, help="rnorm: list of mtilde")
    p.add_argument("--K", dest="K", default=None, help="stencil parameter or comma-separated list")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--points-file", dest="points_file", default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kdm", description="Kernel differentiation matrices on the sphere")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(_SUBCOMMANDS) + ["validate"]:
        _add_common(sub.add_parser(name))
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    overrides = {
        k: getattr(args, k)
        for k in (
            "family", "N", "kernel", "operator", "mtilde", "mtilde_sweep", "K", "dt", "steps", "out",
            "points_file", "seed",
        )
    }
    if args.command in _SUBCOMMANDS:
        overrides["experiment"] = _SUBCOMMANDS[args.command]
    try:
        cfg = load_config(args.config, **overrides)
        if args.command == "validate":
            rep = validate(cfg)
            for line in rep.lines():
                print(line)
            return EXIT_OK if rep.ok else EXIT_CONFIG
        res = run(cfg)
    except _CONFIG_ERRORS as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except ValueError as e:
        # unparseable input that did not come with a typed error (bad encoding, malformed numbers)
        log.error("invalid input: %s", e)
        return EXIT_CONFIG
    for path in res.files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
