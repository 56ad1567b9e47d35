"""Synthetic monotone preference domains.

Randomly initialized projected networks serve as value-function
generators: they are monotone and normalized by construction, universal
in that class, and their mix of substitutabilities vs complementarities
is steered by the bReLU cutoff (smaller cutoff, more substitutes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .construct import ValueTable
from .core import Allocation, Bundle, ValueOracle
from .errors import ConfigError, InstanceTooLargeError
from .mvnn import MvnnOracle, MvnnParams
from .seeding import substream
from .solver import BRUTE_FORCE_LIMIT, SolveConfig, monotone_bnb


@dataclass(frozen=True)
class DomainSpec:
    """Parameters of a random-network preference domain.

    ``architecture`` lists full layer widths, input first and 1 last.
    Weights are drawn uniform on [0, weight_factor/fan_in], biases uniform
    on [bias_low, 0]; the readout is scaled by ``value_scale``. These
    ranges keep hidden pre-activations near the active band of the
    bounded ReLU so both kinks are exercised.
    """

    n: int = 3
    m: int = 10
    architecture: tuple[int, ...] = (10, 8, 8, 1)
    cutoff: float = 1.0
    weight_factor: float = 2.0
    bias_low: float = -0.4
    value_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "architecture", tuple(int(w) for w in self.architecture))
        if self.n < 1 or self.m < 1:
            raise ConfigError("need n >= 1 bidders and m >= 1 items")
        if self.cutoff <= 0:
            raise ConfigError("cutoff must be > 0")
        arch = self.architecture
        if len(arch) < 2 or arch[0] != self.m or arch[-1] != 1:
            raise ConfigError(
                f"architecture must run from {self.m} inputs to 1 output, got {arch}"
            )
        if self.weight_factor <= 0 or self.bias_low > 0 or self.value_scale <= 0:
            raise ConfigError("invalid sampling ranges")

    def to_json_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "architecture": list(self.architecture),
            "cutoff": self.cutoff, "weight_factor": self.weight_factor,
            "bias_low": self.bias_low, "value_scale": self.value_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DomainSpec":
        allowed = {"n", "m", "architecture", "cutoff", "weight_factor",
                   "bias_low", "value_scale", "seed"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown domain fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "architecture" in kwargs:
            kwargs["architecture"] = tuple(kwargs["architecture"])
        return cls(**kwargs)


def sample_mvnn_params(architecture, seed: int = 0, stream=("domain", 0),
                       cutoff: float = 1.0, weight_factor: float = 2.0,
                       bias_low: float = -0.4, value_scale: float = 1.0,
                       ) -> MvnnParams:
    """A random projected network; deterministic per (seed, stream)."""
    rng = substream(seed, stream[0], *stream[1:])
    arch = [int(w) for w in architecture]
    ws, bs = [], []
    for k in range(len(arch) - 1):
        fan_in = arch[k]
        w = rng.uniform(0.0, weight_factor / fan_in, size=(arch[k + 1], arch[k]))
        ws.append(w)
        if k < len(arch) - 2:
            bs.append(rng.uniform(bias_low, 0.0, size=arch[k + 1]))
    ws[-1] = ws[-1] * value_scale
    return MvnnParams(tuple(ws), tuple(bs), cutoff)


def sample_relu_params(architecture, seed: int = 0, stream=("relu", 0),
                       scale: float = 2.0) -> MvnnParams:
    """A random signed network for the plain-ReLU comparison encoding."""
    rng = substream(seed, stream[0], *stream[1:])
    arch = [int(w) for w in architecture]
    ws, bs = [], []
    for k in range(len(arch) - 1):
        fan_in = arch[k]
        hi = scale / fan_in
        ws.append(rng.uniform(-hi, hi, size=(arch[k + 1], arch[k])))
        if k < len(arch) - 2:
            bs.append(rng.uniform(-0.2, 0.2, size=arch[k + 1]))
    return MvnnParams(tuple(ws), tuple(bs), 1.0)


def random_mvnn_oracle(spec: DomainSpec, bidder: int) -> MvnnOracle:
    """Bidder ``bidder``'s value oracle; deterministic per (spec.seed, bidder)."""
    params = sample_mvnn_params(
        spec.architecture, seed=spec.seed, stream=("domain", bidder),
        cutoff=spec.cutoff, weight_factor=spec.weight_factor,
        bias_low=spec.bias_low, value_scale=spec.value_scale,
    )
    return MvnnOracle(params)


def domain_oracles(spec: DomainSpec) -> list[MvnnOracle]:
    return [random_mvnn_oracle(spec, i) for i in range(spec.n)]


def random_monotone_table(m: int, rng: np.random.Generator,
                          scale: float = 1.0) -> ValueTable:
    """A random member of the monotone normalized class: i.i.d. raw draws
    closed under the running max over one-item removals."""
    size = 1 << m
    values = rng.uniform(0.0, scale, size=size)
    values[0] = 0.0
    for mask in range(1, size):
        best = values[mask]
        sub = mask
        while sub:
            bit = sub & -sub
            best = max(best, values[mask ^ bit])
            sub ^= bit
        values[mask] = best
    return ValueTable(m, values)


def optimal_allocation(oracles, solve_cfg: SolveConfig | None = None,
                       ) -> tuple[float, Allocation]:
    """The true welfare-maximizing allocation for the given oracles.

    Network-backed oracles go through the monotone branch-and-bound;
    anything else falls back to exhaustive enumeration.
    """
    oracles = list(oracles)
    if not oracles:
        raise ConfigError("need at least one oracle")
    m = oracles[0].num_items
    if solve_cfg is None:
        solve_cfg = SolveConfig(gap=0.0, timeout=3600.0)
    if all(isinstance(o, MvnnOracle) for o in oracles):
        sol = monotone_bnb([o.params for o in oracles], m, solve_cfg)
        return sol.objective, sol.allocation
    return _generic_brute_force(oracles, m)


def _generic_brute_force(oracles, m: int) -> tuple[float, Allocation]:
    n = len(oracles)
    total = (n + 1) ** m
    if total > BRUTE_FORCE_LIMIT or m > 22:
        raise InstanceTooLargeError(
            f"(n+1)^m = {total} is beyond exhaustive enumeration"
        )
    tables = []
    for o in oracles:
        vals = np.array([
            o.evaluate(Bundle(mask, m)) for mask in range(1 << m)
        ])
        tables.append(vals)
    radix = (n + 1) ** np.arange(m, dtype=np.int64)
    bit = 1 << np.arange(m, dtype=np.int64)
    best_val, best_code = -np.inf, 0
    chunk = 1 << 14
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        codes = np.arange(lo, hi, dtype=np.int64)
        digits = (codes[:, None] // radix) % (n + 1)
        values = np.zeros(hi - lo)
        for i in range(n):
            masks = ((digits == i + 1) * bit).sum(axis=1)
            values += tables[i][masks]
        pick = int(np.argmax(values))
        if values[pick] > best_val:
            best_val = float(values[pick])
            best_code = lo + pick
    digits = (best_code // radix) % (n + 1)
    bundles = []
    for i in range(n):
        mask = 0
        for j in range(m):
            if digits[j] == i + 1:
                mask |= 1 << j
        bundles.append(Bundle(mask, m))
    return best_val, Allocation(tuple(bundles))
