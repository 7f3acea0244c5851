"""Datasets on disk and the derived sample frame used by every estimator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import NonFiniteValue, ParseError


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    x: np.ndarray  # (n, 2)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1, 2)
        if len(y) != len(x):
            raise ValueError("y and x must have the same number of rows")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise NonFiniteValue("dataset contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return len(self.y)


def load_dataset(path) -> Dataset:
    """Read a CSV with header ``y,x1,x2``; extra columns are ignored."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        try:
            cols = [header.index(c) for c in ("y", "x1", "x2")]
        except ValueError:
            raise ParseError(f"header must contain y,x1,x2 (got {','.join(header)})", 1) from None
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                vals = [float(rec[c]) for c in cols]
            except (ValueError, IndexError):
                raise ParseError(f"cannot parse row {rec!r}", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise NonFiniteValue("non-finite value", lineno)
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return Dataset(arr[:, 0], arr[:, 1:])


def write_dataset(path, data: Dataset):
    with open(path, "w", newline="") as fh:
        fh.write("y,x1,x2\n")
        for yi, (a, b) in zip(data.y, data.x):
            fh.write(f"{yi:.17g},{a:.17g},{b:.17g}\n")


@dataclass(frozen=True)
class SampleFrame:
    """Outcomes and scores with their boundary-derived columns.

    ``d`` signed distance, ``t`` treatment indicator, ``s`` nearest piece
    (1-based), ``arc`` arclength of each unit's nearest boundary point.
    """

    y: np.ndarray
    x: np.ndarray
    d: np.ndarray
    t: np.ndarray
    s: np.ndarray
    arc: np.ndarray
    boundary: geo.Boundary
    partition: geo.SegmentPartition

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def L(self) -> int:
        return self.partition.L

    def with_outcome(self, y) -> "SampleFrame":
        return SampleFrame(np.asarray(y, float), self.x, self.d, self.t, self.s, self.arc,
                           self.boundary, self.partition)


def derive_frame(data: Dataset, boundary: geo.Boundary,
                 partition: geo.SegmentPartition | None = None) -> SampleFrame:
    partition = geo.SegmentPartition.whole(boundary) if partition is None else partition
    partition.check(boundary)
    pr = geo.project(boundary, data.x)
    d = geo.signed_distances(boundary, data.x, projection=pr)
    t = (d >= 0).astype(int)
    if partition.L == 1:
        s = np.ones(data.n, dtype=int)
    else:
        s = geo.segment_assign_many(partition, boundary, data.x)
    return SampleFrame(data.y, data.x, d, t, s, pr.arclength, boundary, partition)


def frame_from_arrays(y, x, boundary, partition=None) -> SampleFrame:
    return derive_frame(Dataset(y, x), boundary, partition)
