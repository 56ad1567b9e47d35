"""Exact constructive networks: representing a full monotone value table,
or interpolating a finite monotone-consistent dataset, with zero error.

Both constructions share one step-function core: sort the known points by
value, detect "x is not below any of the first l points" with one hidden
layer, accumulate the indicators with a lower-triangular second layer, and
read out the successive value differences. Equal values are ordered by
bit pattern ascending (stable and deterministic); the choice is observable
only in intermediate parameters, never in outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Bundle, VALUE_TOL
from .errors import DataError, InstanceTooLargeError, MonotonicityError
from .mvnn import MvnnParams

#: exact_mvnn builds 2^m - 1 neurons per hidden layer; cap the blow-up.
MAX_EXACT_ITEMS = 12


@dataclass(frozen=True)
class ValueTable:
    """A complete bundle -> value map over {0,1}^m, indexed by bitmask."""

    m: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, order="C")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (1 << self.m,):
            raise DataError(
                f"table for m={self.m} needs {1 << self.m} entries, got {vals.shape}"
            )
        if np.any(vals < 0):
            raise DataError("table values must be >= 0")

    @classmethod
    def from_dict(cls, values: dict, m: int) -> "ValueTable":
        arr = np.full(1 << m, np.nan)
        for k, v in values.items():
            mask = k.mask if isinstance(k, Bundle) else int(k)
            arr[mask] = float(v)
        if np.any(np.isnan(arr)):
            missing = int(np.flatnonzero(np.isnan(arr))[0])
            raise DataError(f"table is incomplete, e.g. mask {missing:#x} missing")
        return cls(m, arr)

    def value(self, bundle: Bundle) -> float:
        return float(self.values[bundle.mask])

    def check_monotone_normalized(self):
        """Raise unless value(empty)=0 and single-item removals never gain."""
        if self.values[0] != 0.0:
            raise MonotonicityError(
                f"empty bundle must have value 0, got {self.values[0]}"
            )
        # checking every one-bit removal suffices by transitivity
        for mask in range(1, 1 << self.m):
            rest = mask
            while rest:
                bit = rest & -rest
                rest ^= bit
                sub = mask ^ bit
                if self.values[sub] > self.values[mask] + VALUE_TOL:
                    raise MonotonicityError(
                        f"monotonicity violated: value({Bundle(sub, self.m)}) ="
                        f" {self.values[sub]} > value({Bundle(mask, self.m)}) ="
                        f" {self.values[mask]}",
                        witness=(Bundle(sub, self.m), Bundle(mask, self.m)),
                    )


def _step_network(points: list[tuple[Bundle, float]], m: int) -> MvnnParams:
    """Build the two-hidden-layer step network through sorted points.

    ``points`` must be sorted ascending by (value, bit pattern) and start
    with the empty bundle at value 0. Width is len(points) - 1.
    """
    width = len(points) - 1
    if width == 0:
        # only the empty bundle is known: the zero network
        return MvnnParams(
            (np.zeros((1, m)),), (), cutoff=1.0
        )
    w1 = np.empty((width, m))
    for l in range(width):
        w1[l] = 1.0 - points[l][0].vector
    w2 = np.tril(np.ones((width, width)))
    b2 = -np.arange(width, dtype=np.float64)
    diffs = np.array(
        [points[l + 1][1] - points[l][1] for l in range(width)], dtype=np.float64
    )
    readout = np.maximum(0.0, diffs).reshape(1, -1)
    return MvnnParams((w1, w2, readout), (np.zeros(width), b2), cutoff=1.0)


def exact_mvnn(table: ValueTable) -> MvnnParams:
    """Network of dimensions [m, 2^m-1, 2^m-1, 1] reproducing the table
    exactly on every bundle."""
    if table.m > MAX_EXACT_ITEMS:
        raise InstanceTooLargeError(
            f"exact construction supports m <= {MAX_EXACT_ITEMS}, got {table.m}"
        )
    table.check_monotone_normalized()
    points = [
        (Bundle(mask, table.m), float(table.values[mask]))
        for mask in range(1 << table.m)
    ]
    points.sort(key=lambda p: (p[1], p[0].sort_key()))
    return _step_network(points, table.m)


def interpolate(data: list[tuple[Bundle, float]]) -> MvnnParams:
    """Network of dimensions [m, q, q, 1] fitting the q-point dataset
    exactly (the empty bundle with value 0 is prepended when absent).

    The dataset must be monotone-consistent: whenever both A and B appear
    with A a subset of B, value(A) <= value(B).
    """
    if not data:
        raise DataError("interpolation needs at least one data point")
    m = data[0][0].m
    points: list[tuple[Bundle, float]] = []
    seen: dict[int, float] = {}
    for b, v in data:
        if b.m != m:
            raise DataError(f"mixed item counts: {b.m} != {m}")
        if b.mask in seen:
            raise DataError(f"duplicate bundle {b} in dataset")
        if v < 0:
            raise DataError(f"negative value {v} for bundle {b}")
        if b.mask == 0 and v != 0.0:
            raise DataError(f"the empty bundle must have value 0, got {v}")
        seen[b.mask] = float(v)
        points.append((b, float(v)))
    if 0 not in seen:
        points.insert(0, (Bundle.empty(m), 0.0))
    for small, vs in points:
        for large, vl in points:
            if small.mask != large.mask and small.issubset(large) and vs > vl + VALUE_TOL:
                raise MonotonicityError(
                    f"dataset is not monotone-consistent: value({small}) ="
                    f" {vs} > value({large}) = {vl}",
                    witness=(small, large),
                )
    points.sort(key=lambda p: (p[1], p[0].sort_key()))
    return _step_network(points, m)
