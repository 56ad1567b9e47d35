"""Bundles, allocations, reported values and welfare metrics.

All types here are immutable values and safe to share between workers.
Bundles are packed bitmasks keyed by item index; Python integers degrade
gracefully beyond 64 items, although the intended regime is m <= 64.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateInstanceError,
    DimensionError,
    FeasibilityError,
)

#: Absolute tolerance for value comparisons throughout the package.
VALUE_TOL = 1e-9


@dataclass(frozen=True)
class Bundle:
    """A set of items encoded as an indicator bitmask.

    Bit j of ``mask`` is 1 iff item j is contained in the bundle.
    """

    mask: int
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise DimensionError(f"item count must be >= 1, got {self.m}")
        if not 0 <= self.mask < (1 << self.m):
            raise DimensionError(
                f"mask {self.mask:#x} out of range for {self.m} items"
            )

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "Bundle":
        bits = list(bits)
        mask = 0
        for j, b in enumerate(bits):
            if b not in (0, 1):
                raise DataError(f"bundle entries must be 0 or 1, got {b!r}")
            mask |= int(b) << j
        return cls(mask, len(bits))

    @classmethod
    def from_string(cls, s: str) -> "Bundle":
        return cls.from_bits(int(c) for c in s.strip())

    @classmethod
    def empty(cls, m: int) -> "Bundle":
        return cls(0, m)

    @classmethod
    def full(cls, m: int) -> "Bundle":
        return cls((1 << m) - 1, m)

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.mask >> j) & 1 for j in range(self.m))

    @property
    def size(self) -> int:
        return self.mask.bit_count()

    @cached_property
    def vector(self) -> np.ndarray:
        v = np.array(self.bits, dtype=np.float64)
        v.setflags(write=False)
        return v

    def issubset(self, other: "Bundle") -> bool:
        return self.mask & ~other.mask == 0

    def union(self, other: "Bundle") -> "Bundle":
        return Bundle(self.mask | other.mask, self.m)

    def intersects(self, other: "Bundle") -> bool:
        return self.mask & other.mask != 0

    def sort_key(self) -> tuple[int, ...]:
        # lexicographic order on the indicator tuple ("bit-pattern ascending")
        return self.bits

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


def is_feasible(bundles: Sequence[Bundle]) -> bool:
    """True iff every item appears in at most one of the bundles."""
    if not bundles:
        return True
    m = bundles[0].m
    seen = 0
    for b in bundles:
        if b.m != m:
            raise DimensionError(f"bundle length mismatch: {b.m} != {m}")
        if seen & b.mask:
            return False
        seen |= b.mask
    return True


@dataclass(frozen=True)
class Allocation:
    """One bundle per bidder; item-disjoint by construction."""

    bundles: tuple[Bundle, ...]

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(self.bundles))
        if not is_feasible(self.bundles):
            raise FeasibilityError("allocation assigns an item twice")

    @classmethod
    def empty(cls, n: int, m: int) -> "Allocation":
        return cls(tuple(Bundle.empty(m) for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.bundles)

    def __getitem__(self, i: int) -> Bundle:
        return self.bundles[i]

    def __iter__(self):
        return iter(self.bundles)


class ValueOracle:
    """Interface for bundle valuations.

    Implementations declare their item count and whether monotonicity is
    guaranteed; normalized oracles return exactly 0 on the empty bundle.
    """

    num_items: int
    monotone: bool = False

    def evaluate(self, bundle: Bundle) -> float:
        raise NotImplementedError

    def evaluate_many(self, bundles: Sequence[Bundle]) -> np.ndarray:
        return np.array([self.evaluate(b) for b in bundles], dtype=np.float64)


class TableOracle(ValueOracle):
    """Oracle backed by an explicit bundle -> value mapping."""

    def __init__(self, values: dict[Bundle, float] | dict[int, float], m: int,
                 monotone: bool = False, default: float | None = None):
        self.num_items = m
        self.monotone = monotone
        self._default = default
        self._values: dict[int, float] = {}
        for k, v in values.items():
            mask = k.mask if isinstance(k, Bundle) else int(k)
            if v < 0:
                raise DataError(f"negative value {v} for bundle mask {mask}")
            self._values[mask] = float(v)

    def evaluate(self, bundle: Bundle) -> float:
        if bundle.m != self.num_items:
            raise DimensionError(
                f"bundle has {bundle.m} items, oracle expects {self.num_items}"
            )
        v = self._values.get(bundle.mask, self._default)
        if v is None:
            raise DataError(f"no value recorded for bundle {bundle}")
        return v


@dataclass(frozen=True)
class ReportSet:
    """Per-bidder reported (bundle, value) pairs.

    Duplicate detection compares exact bit patterns, never values.
    """

    reports: tuple[tuple[tuple[Bundle, float], ...], ...]

    def __post_init__(self):
        frozen = tuple(
            tuple((b, float(v)) for b, v in bidder) for bidder in self.reports
        )
        object.__setattr__(self, "reports", frozen)
        for i, bidder in enumerate(frozen):
            seen = set()
            for b, v in bidder:
                if v < 0:
                    raise DataError(f"bidder {i}: negative reported value {v}")
                if b.mask in seen:
                    raise DataError(f"bidder {i}: duplicate bundle {b}")
                seen.add(b.mask)
        lookups = tuple({b.mask: v for b, v in bidder} for bidder in frozen)
        object.__setattr__(self, "_lookup", lookups)

    @classmethod
    def from_lists(cls, lists: Sequence[Sequence[tuple[Bundle, float]]]) -> "ReportSet":
        return cls(tuple(tuple(bidder) for bidder in lists))

    @property
    def n(self) -> int:
        return len(self.reports)

    def bundles(self, i: int) -> tuple[Bundle, ...]:
        return tuple(b for b, _ in self.reports[i])

    def value_of(self, i: int, bundle: Bundle) -> float | None:
        return self._lookup[i].get(bundle.mask)

    def contains(self, i: int, bundle: Bundle) -> bool:
        return bundle.mask in self._lookup[i]

    def with_reports(self, i: int, new: Sequence[tuple[Bundle, float]]) -> "ReportSet":
        lists = [list(bidder) for bidder in self.reports]
        lists[i] = lists[i] + list(new)
        return ReportSet.from_lists(lists)


def social_welfare(a: Allocation, oracles: Sequence[ValueOracle]) -> float:
    """True social welfare: the sum of each bidder's value for its bundle."""
    if a.n != len(oracles):
        raise DimensionError(f"{a.n} bundles but {len(oracles)} oracles")
    return float(sum(o.evaluate(b) for o, b in zip(oracles, a)))


def reported_social_welfare(a: Allocation, r: ReportSet,
                            exclude: frozenset[int] = frozenset()) -> float:
    """Welfare under reports: only values for reported bundles contribute.

    Bidders in ``exclude`` contribute 0 regardless of their bundle.
    """
    if a.n != r.n:
        raise DimensionError(f"{a.n} bundles but {r.n} bidders in reports")
    total = 0.0
    for i, bundle in enumerate(a):
        if i in exclude:
            continue
        v = r.value_of(i, bundle)
        if v is not None:
            total += v
    return total


def efficiency_loss(achieved: float, optimal: float) -> float:
    """1 - achieved/optimal, clamped to [0, 1]."""
    if optimal <= 0:
        raise DegenerateInstanceError(f"optimal welfare must be > 0, got {optimal}")
    if achieved < -VALUE_TOL or achieved > optimal + VALUE_TOL:
        raise DataError(
            f"achieved welfare {achieved} outside [0, {optimal}]"
        )
    return min(1.0, max(0.0, 1.0 - achieved / optimal))


def relative_revenue(payments: Sequence[float], optimal: float) -> float:
    """Total payments divided by the optimal social welfare."""
    if optimal <= 0:
        raise DegenerateInstanceError(f"optimal welfare must be > 0, got {optimal}")
    return float(sum(payments)) / optimal
