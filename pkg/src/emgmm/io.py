"""Flat sample files, JSON documents and CSV tables."""

import csv
import json
import os

import numpy as np

from .errors import ParseError


def write_samples(path, points, weights=None, labels=None):
    """Header ``d K [w_1 .. w_K]`` then one whitespace-separated sample per line.

    Floats are written with 17 significant digits so reading back is exact.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = points.shape
    with open(path, "w") as fh:
        if weights is None:
            raise ValueError("weights are required to write a sample file")
        weights = np.asarray(weights, dtype=np.float64)
        header = [str(d), str(weights.size)] + [format(w, ".17g") for w in weights]
        fh.write(" ".join(header) + "\n")
        for idx in range(n):
            fields = [format(v, ".17g") for v in points[idx]]
            if labels is not None:
                fields.append(str(int(labels[idx])))
            fh.write(" ".join(fields) + "\n")


def read_samples(path):
    """Return ``(points, weights or None, labels or None)``."""
    try:
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) < 2:
                raise ParseError(f"{path}: header must start with 'd K'")
            d, k = int(header[0]), int(header[1])
            weights = None
            if len(header) > 2:
                if len(header) != 2 + k:
                    raise ParseError(f"{path}: header lists {len(header) - 2} weights, K = {k}")
                weights = np.array([float(v) for v in header[2:]])
            rows = [line.split() for line in fh if line.strip()]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no samples")
    width = {len(r) for r in rows}
    if width - {d, d + 1}:
        raise ParseError(f"{path}: rows must have {d} or {d + 1} columns")
    try:
        points = np.array([[float(v) for v in r[:d]] for r in rows])
        labels = None
        if width == {d + 1}:
            labels = np.array([int(r[d]) for r in rows])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return points, weights, labels


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(path, columns, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="raise")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _cell(row.get(c, "")) for c in columns})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v
