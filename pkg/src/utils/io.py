from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

log = logging.getLogger("kdm.io")

HEADER_PREFIX = "# config: "


def _atomic_write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def header_line(config: Optional[Dict[str, Any]]) -> str:
    return HEADER_PREFIX + json.dumps(config or {}, sort_keys=True, default=str) + "\n"


def write_csv(
    df: pd.DataFrame,
    path: Path,
    config: Optional[Dict[str, Any]] = None,
    float_format: str = "%.17g",
) -> Path:
    body = df.to_csv(index=False, float_format=float_format, lineterminator="\n")
    _atomic_write_text(path, header_line(config) + body)
    log.info("CSV written: %s rows=%d", path, len(df))
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_header(path: Path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    if not first.startswith(HEADER_PREFIX):
        raise ValueError(f"{path}: missing config header")
    return json.loads(first[len(HEADER_PREFIX) :])


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    return str(obj)


def write_json(
    payload: Dict[str, Any], path: Path, config: Optional[Dict[str, Any]] = None
) -> Path:
    doc = dict(payload)
    if config is not None:
        doc["config"] = config
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable, allow_nan=True)
    _atomic_write_text(path, text + "\n")
    log.info("JSON written: %s", path)
    return path


def write_text(path: Path, text: str, config: Optional[Dict[str, Any]] = None) -> Path:
    """Plain text body under the config header line."""
    _atomic_write_text(path, header_line(config) + text)
    log.info("text written: %s", path)
    return path
