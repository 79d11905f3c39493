"""Deterministic CSV/JSON writers shared by the command-line front end."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["write_csv", "write_json", "to_jsonable"]


def write_csv(path, header, rows) -> None:
    """Comma-separated, one header row, every number as ``%.12e``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.12e" % v for v in row) + "\n")


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, data) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
