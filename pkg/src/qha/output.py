"""CSV and manifest writers.

Floats are written with 17 significant digits (``%.17g``), which round-trips
every IEEE double, so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

FLOAT_FMT = "%.17g"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def write_csv(path: str, header, rows) -> str:
    """Write ``rows`` (an iterable of sequences, or a 2-D array) under ``header``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row of length {len(row)} under a {len(header)}-column header")
            w.writerow([_cell(v) for v in row])
    return path


def columns(*cols):
    """Zip equal-length columns into rows."""
    arrs = [np.asarray(c) for c in cols]
    n = {a.shape[0] for a in arrs}
    if len(n) != 1:
        raise ValueError("columns differ in length")
    return zip(*arrs)


def read_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a CSV written by :func:`write_csv`."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], float).reshape(-1, len(header))
    return header, data


def write_manifest(out_dir: str, manifest: dict) -> str:
    """Write ``manifest.json`` after checking that every listed output exists."""
    missing = [f for f in manifest.get("outputs", []) if not os.path.isfile(os.path.join(out_dir, f))]
    if missing:
        raise FileNotFoundError(f"manifest lists missing outputs: {missing}")
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
