"""Winner-determination MILPs for bounded-ReLU networks.

The encoding introduces, per bidder, layer and hidden neuron, a continuous
pair (eta, z) and a binary pair (y, mu) that linearize the two kinks of the
bounded ReLU via four big-M constants. Interval arithmetic supplies the
constants and, for monotone networks, is perfectly tight: every neuron's
pre-activation bounds are attained at the all-ones / all-zeros inputs.

Constraint families per neuron (cutoff t):

    o <= eta <= o + y*L1        0 <= eta <= (1-y)*L2
    eta - mu*L3 <= z <= eta     t - (1-mu)*L4 <= z <= t

Interval analysis removes work in four cases: dead neurons (z fixed to 0),
always-linear neurons (z = o as one equality), neurons that never go
negative (eta = o, first two families dropped) and neurons that never hit
the cutoff (z = eta, last two families dropped).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Bundle
from .errors import ConstraintViolationError, DimensionError, ParameterError
from .mvnn import MvnnParams, brelu, is_projected

#: multiplier applied to emitted big-M constants to absorb float drift
BIG_M_SAFETY = 1.0 + 1e-9

FIX_ZERO = "fix-zero"
LINEAR_PASSTHROUGH = "linear-passthrough"
DROP_ETA_ROWS = "drop-eta-rows"
DROP_Z_ROWS = "drop-z-rows"
FULL = "full"


# ---------------------------------------------------------------------------
# model containers


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    is_binary: bool = False


@dataclass(frozen=True, eq=False)
class Constraint:
    name: str
    terms: tuple[tuple[int, float], ...]
    relation: str  # "<=", ">=" or "="
    rhs: float


@dataclass(frozen=True, eq=False)
class MilpModel:
    """An immutable maximize-objective mixed-binary model."""

    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[int, float], ...]
    num_bidders: int = 0
    num_items: int = 0
    allocation_vars: tuple[tuple[int, ...], ...] = ()

    @property
    def binary_indices(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if v.is_binary)

    def name_index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    def allocation_bits(self, point: np.ndarray) -> list[Bundle]:
        """Round the allocation block of a solution vector into bundles."""
        bundles = []
        for row in self.allocation_vars:
            mask = 0
            for j, idx in enumerate(row):
                if point[idx] > 0.5:
                    mask |= 1 << j
            bundles.append(Bundle(mask, self.num_items))
        return bundles


class ModelBuilder:
    """Accumulates variables and constraints, then freezes a MilpModel."""

    def __init__(self, num_bidders: int = 0, num_items: int = 0):
        self.num_bidders = num_bidders
        self.num_items = num_items
        self._vars: list[Variable] = []
        self._cons: list[Constraint] = []
        self._obj: list[tuple[int, float]] = []
        self.allocation_vars: list[list[int]] = []

    def add_var(self, name: str, lower: float, upper: float,
                binary: bool = False) -> int:
        self._vars.append(Variable(name, float(lower), float(upper), binary))
        return len(self._vars) - 1

    def add_constraint(self, name: str, terms: Sequence[tuple[int | None, float]],
                       relation: str, rhs: float):
        clean = tuple((i, float(c)) for i, c in terms if i is not None and c != 0.0)
        self._cons.append(Constraint(name, clean, relation, float(rhs)))

    def add_objective_term(self, index: int, coefficient: float):
        if coefficient != 0.0:
            self._obj.append((index, float(coefficient)))

    def build(self) -> MilpModel:
        return MilpModel(
            variables=tuple(self._vars),
            constraints=tuple(self._cons),
            objective=tuple(self._obj),
            num_bidders=self.num_bidders,
            num_items=self.num_items,
            allocation_vars=tuple(tuple(r) for r in self.allocation_vars),
        )


# ---------------------------------------------------------------------------
# interval-arithmetic bounds and big-M constants


@dataclass(frozen=True, eq=False)
class LayerBounds:
    """Per-neuron pre-activation interval and post-activation upper bound.

    The post-activation lower bound is identically 0 for projected
    networks, so it is not stored.
    """

    lower_pre: np.ndarray
    upper_pre: np.ndarray
    upper_post: np.ndarray


@dataclass(frozen=True, eq=False)
class NeuronBounds:
    layers: tuple[LayerBounds, ...]
    cutoff: float


@dataclass(frozen=True, eq=False)
class LayerBigM:
    l1: np.ndarray
    l2: np.ndarray
    l3: np.ndarray
    l4: np.ndarray


@dataclass(frozen=True, eq=False)
class BigMConstants:
    layers: tuple[LayerBigM, ...]


def ia_bounds(p: MvnnParams) -> NeuronBounds:
    """Forward interval propagation from the input box [0,1]^m.

    Uses the same matrix expressions as the forward pass, so the bounds
    equal the pre-activations at the all-ones / all-zeros inputs exactly.
    """
    if not is_projected(p):
        raise ConstraintViolationError(
            "interval bounds require projected parameters (W >= 0, b <= 0)"
        )
    t = p.cutoff
    layers = []
    upper_prev = np.ones(p.num_items)
    lower_prev = np.zeros(p.num_items)
    for k in range(p.num_layers - 1):
        upper_pre = p.weights[k] @ upper_prev + p.biases[k]
        lower_pre = p.weights[k] @ lower_prev + p.biases[k]
        upper_post = brelu(upper_pre, t)
        layers.append(LayerBounds(lower_pre, upper_pre, upper_post))
        upper_prev = upper_post
        lower_prev = np.zeros_like(lower_pre)
    return NeuronBounds(tuple(layers), t)


def big_m(p: MvnnParams, bounds: NeuronBounds) -> BigMConstants:
    """The four per-neuron constants, exact (no safety margin applied)."""
    layers = []
    for k, lb in enumerate(bounds.layers):
        b = p.biases[k]
        l1 = np.maximum(0.0, -b)
        l2 = np.maximum(0.0, lb.upper_pre)
        l3 = np.maximum(0.0, l2 - bounds.cutoff)
        l4 = np.full_like(l2, bounds.cutoff)
        layers.append(LayerBigM(l1, l2, l3, l4))
    return BigMConstants(tuple(layers))


def prune(bounds: NeuronBounds) -> tuple[tuple[str, ...], ...]:
    """Per-neuron constraint-removal decision from the interval bounds."""
    t = bounds.cutoff
    out = []
    for lb in bounds.layers:
        decisions = []
        for lo, hi in zip(lb.lower_pre, lb.upper_pre):
            if hi <= 0.0:
                decisions.append(FIX_ZERO)
            elif lo >= 0.0 and hi <= t:
                decisions.append(LINEAR_PASSTHROUGH)
            elif lo >= 0.0:
                decisions.append(DROP_ETA_ROWS)
            elif hi <= t:
                decisions.append(DROP_Z_ROWS)
            else:
                decisions.append(FULL)
        out.append(tuple(decisions))
    return tuple(out)


# ---------------------------------------------------------------------------
# layer encoding


def _affine_terms(weights_row: np.ndarray, prev: Sequence[int | None]):
    return [(ref, float(w)) for ref, w in zip(prev, weights_row)]


def encode_layer(builder: ModelBuilder, bidder: int, layer: int,
                 weights: np.ndarray, bias: np.ndarray,
                 prev: Sequence[int | None], bounds: LayerBounds,
                 bigm: LayerBigM, decisions: Sequence[str],
                 cutoff: float) -> list[int | None]:
    """Append one hidden layer's variables and rows; returns output refs.

    ``prev`` holds the previous layer's variable indices (None marks a
    neuron fixed at 0). Emitted big-M constants carry the safety margin.
    """
    t = cutoff
    out: list[int | None] = []
    for j in range(weights.shape[0]):
        tag = f"{bidder}_{layer}_{j}"
        decision = decisions[j]
        if decision == FIX_ZERO:
            out.append(None)
            continue
        o_terms = _affine_terms(weights[j], prev)
        b = float(bias[j])
        z_ub = min(t, float(bounds.upper_post[j]))
        l1 = float(bigm.l1[j]) * BIG_M_SAFETY
        l2 = float(bigm.l2[j]) * BIG_M_SAFETY
        l3 = float(bigm.l3[j]) * BIG_M_SAFETY
        l4 = float(bigm.l4[j]) * BIG_M_SAFETY

        if decision == LINEAR_PASSTHROUGH:
            z = builder.add_var(f"z_{tag}", 0.0, z_ub)
            builder.add_constraint(
                f"lin_{tag}", [(z, 1.0)] + [(r, -w) for r, w in o_terms], "=", b
            )
            out.append(z)
            continue

        if decision == DROP_ETA_ROWS:
            # eta == o is substituted; only the cutoff branch remains
            z = builder.add_var(f"z_{tag}", 0.0, z_ub)
            mu = builder.add_var(f"mu_{tag}", 0.0, 1.0, binary=True)
            builder.add_constraint(
                f"zub_{tag}", [(z, 1.0)] + [(r, -w) for r, w in o_terms], "<=", b
            )
            builder.add_constraint(
                f"zlo_{tag}",
                [(r, w) for r, w in o_terms] + [(z, -1.0), (mu, -l3)], "<=", -b,
            )
            builder.add_constraint(
                f"cut_{tag}", [(mu, l4), (z, -1.0)], "<=", l4 - t
            )
            out.append(z)
            continue

        if decision == DROP_Z_ROWS:
            # z == eta; only the zero branch remains
            z = builder.add_var(f"z_{tag}", 0.0, z_ub)
            y = builder.add_var(f"y_{tag}", 0.0, 1.0, binary=True)
            builder.add_constraint(
                f"prelo_{tag}", [(r, w) for r, w in o_terms] + [(z, -1.0)], "<=", -b
            )
            builder.add_constraint(
                f"preub_{tag}",
                [(z, 1.0)] + [(r, -w) for r, w in o_terms] + [(y, -l1)], "<=", b,
            )
            builder.add_constraint(
                f"off_{tag}", [(z, 1.0), (y, l2)], "<=", l2
            )
            out.append(z)
            continue

        # full encoding
        eta = builder.add_var(f"eta_{tag}", 0.0, max(0.0, l2))
        z = builder.add_var(f"z_{tag}", 0.0, z_ub)
        y = builder.add_var(f"y_{tag}", 0.0, 1.0, binary=True)
        mu = builder.add_var(f"mu_{tag}", 0.0, 1.0, binary=True)
        builder.add_constraint(
            f"prelo_{tag}", [(r, w) for r, w in o_terms] + [(eta, -1.0)], "<=", -b
        )
        builder.add_constraint(
            f"preub_{tag}",
            [(eta, 1.0)] + [(r, -w) for r, w in o_terms] + [(y, -l1)], "<=", b,
        )
        builder.add_constraint(f"off_{tag}", [(eta, 1.0), (y, l2)], "<=", l2)
        builder.add_constraint(
            f"zlo_{tag}", [(eta, 1.0), (z, -1.0), (mu, -l3)], "<=", 0.0
        )
        builder.add_constraint(f"zub_{tag}", [(z, 1.0), (eta, -1.0)], "<=", 0.0)
        builder.add_constraint(f"cut_{tag}", [(mu, l4), (z, -1.0)], "<=", l4 - t)
        out.append(z)
    return out


def _novelty_row(builder: ModelBuilder, bidder: int, index: int,
                 a_vars: Sequence[int], bundle: Bundle):
    # Hamming distance >= 1 from the excluded bundle
    terms = []
    ones = 0
    for j, idx in enumerate(a_vars):
        if (bundle.mask >> j) & 1:
            terms.append((idx, -1.0))
            ones += 1
        else:
            terms.append((idx, 1.0))
    builder.add_constraint(f"novel_{bidder}_{index}", terms, ">=", 1.0 - ones)


def encode_wdp(networks: Sequence[MvnnParams], m: int | None = None,
               prune_model: bool = True,
               excluded_bundles: dict[int, Sequence[Bundle]] | None = None,
               ) -> MilpModel:
    """Encode max over feasible allocations of the summed network values.

    ``excluded_bundles`` adds, per listed bidder, rows forbidding exact
    bundles (used for the auction's already-queried re-solve).
    """
    networks = list(networks)
    if not networks:
        raise DimensionError("need at least one network")
    if m is None:
        m = networks[0].num_items
    for i, p in enumerate(networks):
        if p.num_items != m:
            raise DimensionError(
                f"bidder {i}: network expects {p.num_items} items, not {m}"
            )
        if not is_projected(p):
            raise ConstraintViolationError(
                f"bidder {i}: network violates the sign constraints"
            )
    builder = ModelBuilder(num_bidders=len(networks), num_items=m)
    for i in range(len(networks)):
        row = [builder.add_var(f"a_{i}_{j}", 0.0, 1.0, binary=True)
               for j in range(m)]
        builder.allocation_vars.append(row)
    for j in range(m):
        builder.add_constraint(
            f"item_{j}",
            [(builder.allocation_vars[i][j], 1.0) for i in range(len(networks))],
            "<=", 1.0,
        )
    for i, p in enumerate(networks):
        bounds = ia_bounds(p)
        constants = big_m(p, bounds)
        decisions = (
            prune(bounds) if prune_model
            else tuple(tuple(FULL for _ in lb.upper_pre) for lb in bounds.layers)
        )
        refs: list[int | None] = list(builder.allocation_vars[i])
        for k in range(p.num_layers - 1):
            refs = encode_layer(
                builder, i, k + 1, p.weights[k], p.biases[k], refs,
                bounds.layers[k], constants.layers[k], decisions[k], p.cutoff,
            )
        readout = p.weights[-1].ravel()
        for ref, w in zip(refs, readout):
            if ref is not None:
                builder.add_objective_term(ref, float(w))
    if excluded_bundles:
        for i in sorted(excluded_bundles):
            for idx, bundle in enumerate(excluded_bundles[i]):
                if bundle.m != m:
                    raise DimensionError(
                        f"excluded bundle for bidder {i} has {bundle.m} items"
                    )
                _novelty_row(builder, i, idx, builder.allocation_vars[i], bundle)
    return builder.build()


# ---------------------------------------------------------------------------
# plain-ReLU encoding (runtime-comparison baseline only)


def relu_ia_bounds(p: MvnnParams):
    """Signed interval propagation for an unconstrained ReLU network."""
    uppers, lowers = [], []
    up = np.ones(p.num_items)
    lo = np.zeros(p.num_items)
    for k in range(p.num_layers - 1):
        w = p.weights[k]
        wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
        upper_pre = wp @ up + wn @ lo + p.biases[k]
        lower_pre = wp @ lo + wn @ up + p.biases[k]
        uppers.append(upper_pre)
        lowers.append(lower_pre)
        up = np.maximum(0.0, upper_pre)
        lo = np.maximum(0.0, lower_pre)
    return lowers, uppers


def encode_wdp_relu(networks: Sequence[MvnnParams], m: int | None = None,
                    prune_model: bool = True) -> MilpModel:
    """Standard big-M encoding of plain ReLU networks, for the runtime
    comparison against the bounded-ReLU encoding."""
    networks = list(networks)
    if not networks:
        raise DimensionError("need at least one network")
    if m is None:
        m = networks[0].num_items
    builder = ModelBuilder(num_bidders=len(networks), num_items=m)
    for i in range(len(networks)):
        row = [builder.add_var(f"a_{i}_{j}", 0.0, 1.0, binary=True)
               for j in range(m)]
        builder.allocation_vars.append(row)
    for j in range(m):
        builder.add_constraint(
            f"item_{j}",
            [(builder.allocation_vars[i][j], 1.0) for i in range(len(networks))],
            "<=", 1.0,
        )
    for i, p in enumerate(networks):
        if p.num_items != m:
            raise DimensionError(f"bidder {i}: width mismatch")
        lowers, uppers = relu_ia_bounds(p)
        refs: list[int | None] = list(builder.allocation_vars[i])
        for k in range(p.num_layers - 1):
            out: list[int | None] = []
            w, b = p.weights[k], p.biases[k]
            for j in range(w.shape[0]):
                tag = f"{i}_{k + 1}_{j}"
                lo = float(lowers[k][j])
                hi = float(uppers[k][j])
                if hi <= 0.0 and prune_model:
                    out.append(None)
                    continue
                o_terms = _affine_terms(w[j], refs)
                bj = float(b[j])
                z_ub = max(0.0, hi)
                if lo >= 0.0 and prune_model:
                    z = builder.add_var(f"z_{tag}", max(0.0, lo), z_ub)
                    builder.add_constraint(
                        f"lin_{tag}",
                        [(z, 1.0)] + [(r, -ww) for r, ww in o_terms], "=", bj,
                    )
                    out.append(z)
                    continue
                lo_m = lo * BIG_M_SAFETY if lo < 0 else lo
                hi_m = hi * BIG_M_SAFETY
                z = builder.add_var(f"z_{tag}", 0.0, z_ub)
                y = builder.add_var(f"y_{tag}", 0.0, 1.0, binary=True)
                builder.add_constraint(
                    f"prelo_{tag}",
                    [(r, ww) for r, ww in o_terms] + [(z, -1.0)], "<=", -bj,
                )
                builder.add_constraint(
                    f"preub_{tag}",
                    [(z, 1.0)] + [(r, -ww) for r, ww in o_terms] + [(y, -lo_m)],
                    "<=", bj - lo_m,
                )
                builder.add_constraint(
                    f"on_{tag}", [(z, 1.0), (y, -hi_m)], "<=", 0.0
                )
                out.append(z)
            refs = out
        readout = p.weights[-1].ravel()
        for ref, ww in zip(refs, readout):
            if ref is not None:
                builder.add_objective_term(ref, float(ww))
    return builder.build()


def export_lp(model: MilpModel) -> str:
    """CPLEX-style LP text; see :mod:`mvnn_auction.lpformat`."""
    from .lpformat import write_lp

    return write_lp(model)
