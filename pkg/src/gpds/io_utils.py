"""CSV and JSON helpers.

Floats are written with 17 significant digits so a write/read round trip
reproduces every value bit-exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path: str | Path, header: list[str], rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float)) if np.size(rows) else np.empty((0, len(header)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_float(v) for v in row) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError(f"{path}: missing header row")
        names = [h.strip() for h in header.split(",")]
        data = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise ValueError(f"{path}:{lineno}: expected {len(names)} fields")
            data.append([float(p) for p in parts])
    arr = np.asarray(data, dtype=float) if data else np.empty((0, len(names)))
    return names, arr


def read_data_csv(path: str | Path) -> np.ndarray:
    """Read a data file with x1..xD columns."""
    names, arr = read_csv(path)
    expected = [f"x{i + 1}" for i in range(len(names))]
    if names != expected:
        raise ValueError(f"{path}: expected header {','.join(expected)}, got {','.join(names)}")
    return arr


def write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
