"""Exact small-scale solvers for the winner-determination models.

Three independent routes are provided and cross-checked in the tests:

* ``solve_milp``   -- best-first branch-and-bound over the binary variables
  of a MilpModel, with LP relaxations solved by HiGHS (scipy.optimize).
* ``monotone_bnb`` -- depth-first search directly over item assignments,
  using monotonicity for an admissible upper bound: give every undecided
  item to each bidder at once.
* ``brute_force``  -- exhaustive enumeration of all (n+1)^m assignments.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .core import Allocation, Bundle
from .errors import (
    ConstraintViolationError,
    InstanceTooLargeError,
    ParameterError,
    SolverError,
)
from .milp import MilpModel, encode_wdp, encode_wdp_relu
from .mvnn import MvnnParams, forward, forward_batch, is_projected

BRANCH_RULES = ("most-fractional", "first-fractional")

#: enumeration ceiling for the brute-force oracle
BRUTE_FORCE_LIMIT = 10_000_000

_PRUNE_TOL = 1e-9


@dataclass(frozen=True)
class SolveConfig:
    gap: float = 1e-2
    timeout: float = 300.0
    feasibility_tol: float = 1e-7
    integrality_tol: float = 1e-6
    branching: str = "most-fractional"

    def __post_init__(self):
        if self.gap < 0:
            raise ParameterError("gap must be >= 0")
        if self.timeout <= 0:
            raise ParameterError("timeout must be > 0")
        if self.branching not in BRANCH_RULES:
            raise ParameterError(f"unknown branching rule {self.branching!r}")


@dataclass(frozen=True)
class Solution:
    allocation: Allocation | None
    objective: float
    bound: float
    status: str  # optimal | gap-reached | timeout | infeasible
    node_count: int
    wall_time: float

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": None if math.isinf(self.objective) else self.objective,
            "bound": None if math.isinf(self.bound) else self.bound,
            "allocation": None if self.allocation is None
            else [str(b) for b in self.allocation],
            "node_count": self.node_count,
            "wall_time_s": self.wall_time,
        }


@dataclass(frozen=True)
class LpResult:
    status: str  # optimal | infeasible | unbounded
    value: float | None
    point: np.ndarray | None


def solve_lp(constraints, objective, bounds, num_vars: int | None = None) -> LpResult:
    """Maximize a linear objective subject to rows and box bounds.

    ``constraints`` are milp.Constraint rows, ``objective`` sparse
    (index, coefficient) pairs, ``bounds`` per-variable (lower, upper).
    Deterministic given identical inputs.
    """
    bounds = list(bounds)
    n = num_vars if num_vars is not None else len(bounds)
    c = np.zeros(n)
    for idx, coef in objective:
        c[idx] += coef
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for row in constraints:
        dense = np.zeros(n)
        for idx, coef in row.terms:
            dense[idx] += coef
        if row.relation == "<=":
            a_ub.append(dense)
            b_ub.append(row.rhs)
        elif row.relation == ">=":
            a_ub.append(-dense)
            b_ub.append(-row.rhs)
        elif row.relation == "=":
            a_eq.append(dense)
            b_eq.append(row.rhs)
        else:
            raise SolverError(f"unsupported relation {row.relation!r}")
    res = linprog(
        -c,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        return LpResult("optimal", float(-res.fun), np.asarray(res.x))
    if res.status == 2:
        return LpResult("infeasible", None, None)
    if res.status == 3:
        return LpResult("unbounded", None, None)
    raise SolverError(f"LP solver failed: {res.message}")


class _LpData:
    """Constraint matrices built once; only variable bounds change per node."""

    def __init__(self, model: MilpModel):
        n = len(model.variables)
        self.n = n
        self.c = np.zeros(n)
        for idx, coef in model.objective:
            self.c[idx] += coef
        a_ub, b_ub, a_eq, b_eq = [], [], [], []
        for row in model.constraints:
            dense = np.zeros(n)
            for idx, coef in row.terms:
                dense[idx] += coef
            if row.relation == "<=":
                a_ub.append(dense)
                b_ub.append(row.rhs)
            elif row.relation == ">=":
                a_ub.append(-dense)
                b_ub.append(-row.rhs)
            else:
                a_eq.append(dense)
                b_eq.append(row.rhs)
        self.a_ub = np.array(a_ub) if a_ub else None
        self.b_ub = np.array(b_ub) if b_ub else None
        self.a_eq = np.array(a_eq) if a_eq else None
        self.b_eq = np.array(b_eq) if b_eq else None

    def solve(self, lower: np.ndarray, upper: np.ndarray) -> LpResult:
        res = linprog(
            -self.c, A_ub=self.a_ub, b_ub=self.b_ub,
            A_eq=self.a_eq, b_eq=self.b_eq,
            bounds=np.column_stack([lower, upper]), method="highs",
        )
        if res.status == 0:
            return LpResult("optimal", float(-res.fun), np.asarray(res.x))
        if res.status == 2:
            return LpResult("infeasible", None, None)
        if res.status == 3:
            return LpResult("unbounded", None, None)
        raise SolverError(f"LP solver failed: {res.message}")


def solve_milp(model: MilpModel, cfg: SolveConfig = SolveConfig(),
               warm: tuple[float, Allocation] | None = None,
               collect_bounds: list | None = None) -> Solution:
    """Best-first branch-and-bound on the fractional binaries.

    ``warm`` optionally provides a known-feasible (objective, allocation)
    incumbent used for pruning only. ``collect_bounds`` is appended with
    the LP bound of every branched node when provided.
    """
    start = time.perf_counter()
    data = _LpData(model)
    binaries = np.array(model.binary_indices, dtype=np.int64)
    lower = np.array([v.lower for v in model.variables])
    upper = np.array([v.upper for v in model.variables])
    if binaries.size:
        lower[binaries] = np.maximum(lower[binaries], 0.0)
        upper[binaries] = np.minimum(upper[binaries], 1.0)

    inc_value = -math.inf
    inc_point: np.ndarray | None = None
    inc_alloc: Allocation | None = None
    if warm is not None:
        inc_value, inc_alloc = float(warm[0]), warm[1]

    nodes = 0
    counter = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    # bound of an unexplored node = its parent's LP value (root: +inf);
    # ties broken depth-first via the negated insertion counter
    heapq.heappush(heap, (-math.inf, 0, lower, upper))
    timed_out = False

    while heap:
        neg_bound, neg_counter, node_lo, node_hi = heapq.heappop(heap)
        parent_bound = -neg_bound
        if parent_bound <= inc_value + _PRUNE_TOL:
            continue
        if time.perf_counter() - start > cfg.timeout:
            timed_out = True
            heapq.heappush(heap, (neg_bound, neg_counter, node_lo, node_hi))
            break
        res = data.solve(node_lo, node_hi)
        nodes += 1
        if res.status == "infeasible":
            continue
        if res.status == "unbounded":
            raise SolverError("relaxation unbounded; WDP models are box-bounded")
        bound = res.value
        if bound <= inc_value + _PRUNE_TOL:
            continue
        x = res.point
        if binaries.size:
            frac = np.abs(x[binaries] - np.round(x[binaries]))
            integral = bool(np.all(frac <= cfg.integrality_tol))
        else:
            integral = True
        if integral:
            if bound > inc_value:
                inc_value = bound
                inc_point = x
            continue
        if collect_bounds is not None:
            collect_bounds.append(bound)
        if cfg.branching == "first-fractional":
            pick = int(np.flatnonzero(frac > cfg.integrality_tol)[0])
        else:
            pick = int(np.argmax(frac))
        var = int(binaries[pick])
        lo0, hi0 = node_lo.copy(), node_hi.copy()
        hi0[var] = 0.0
        lo1, hi1 = node_lo.copy(), node_hi.copy()
        lo1[var] = 1.0
        counter += 1
        heapq.heappush(heap, (-bound, -counter, lo0, hi0))
        counter += 1
        heapq.heappush(heap, (-bound, -counter, lo1, hi1))

    open_bound = max((-entry[0] for entry in heap), default=-math.inf)
    wall = time.perf_counter() - start

    if inc_point is None and inc_alloc is None:
        if timed_out:
            return Solution(None, -math.inf, open_bound, "timeout", nodes, wall)
        return Solution(None, -math.inf, -math.inf, "infeasible", nodes, wall)

    final_bound = max(inc_value, open_bound)
    rel_gap = (final_bound - inc_value) / max(1.0, abs(inc_value))
    if timed_out:
        status = "timeout" if rel_gap > cfg.gap else "gap-reached"
    elif rel_gap <= 1e-9:
        status = "optimal"
        final_bound = inc_value
    else:
        status = "gap-reached"
    if inc_point is not None and model.allocation_vars:
        allocation = Allocation(tuple(model.allocation_bits(inc_point)))
    else:
        allocation = inc_alloc
    return Solution(allocation, inc_value, final_bound, status, nodes, wall)


def _gap_cut(inc: float, gap: float) -> float:
    threshold = inc + _PRUNE_TOL
    if gap > 0 and inc > -math.inf:
        threshold = max(threshold, inc + gap * max(1.0, abs(inc)))
    return threshold


def monotone_bnb(networks, m: int | None = None,
                 cfg: SolveConfig = SolveConfig(),
                 excluded: dict[int, set[int]] | None = None) -> Solution:
    """Assign items one by one, pruning with the monotone upper bound.

    ``excluded`` maps bidder index to a set of forbidden bundle masks
    (exact matches rejected at the leaves). Returns the exact optimum when
    cfg.gap == 0 and no timeout occurs.
    """
    networks = list(networks)
    if m is None:
        m = networks[0].num_items
    n = len(networks)
    for i, p in enumerate(networks):
        if p.num_items != m:
            raise ConstraintViolationError(f"bidder {i}: width mismatch")
        if not is_projected(p):
            raise ConstraintViolationError(
                f"bidder {i}: network violates the sign constraints"
            )
    excluded = {i: set(v) for i, v in (excluded or {}).items()}
    start = time.perf_counter()

    def leaf_ok(masks) -> bool:
        return all(masks[i] not in excluded.get(i, ()) for i in range(n))

    # layer-1 pre-activations of each bidder's optimistic bundle
    # (committed plus all undecided items); deciding item j subtracts one
    # weight column from every bidder that does not receive it.
    first_w = [p.weights[0] for p in networks]
    first_b = [p.biases[0] if p.num_layers > 1 else np.zeros(1)
               for p in networks]
    cols = [[np.ascontiguousarray(w[:, j]) for j in range(m)] for w in first_w]
    mids = [
        [(p.weights[k], p.biases[k]) for k in range(1, p.num_layers - 1)]
        for p in networks
    ]
    readouts = [p.weights[-1].ravel() for p in networks]

    def tail_value(i: int, pre1: np.ndarray) -> float:
        p = networks[i]
        if p.num_layers == 1:
            return float(pre1[0])
        z = np.minimum(p.cutoff, np.maximum(0.0, pre1))
        for w, b in mids[i]:
            z = np.minimum(p.cutoff, np.maximum(0.0, w @ z + b))
        return float(readouts[i] @ z)

    root_pre = tuple(
        (w @ np.ones(m) + b) if networks[i].num_layers > 1
        else w @ np.ones(m)
        for i, (w, b) in enumerate(zip(first_w, first_b))
    )

    state = {
        "inc": -math.inf, "best": None, "nodes": 0,
        "pruned_bound": -math.inf, "timed_out": False,
    }

    # greedy warm start: give each item to the locally best bidder
    greedy = [0] * n
    for j in range(m):
        best_gain, best_i = 0.0, None
        for i in range(n):
            gain = forward(networks[i], Bundle(greedy[i] | (1 << j), m)) - \
                forward(networks[i], Bundle(greedy[i], m))
            if gain > best_gain + 1e-15:
                best_gain, best_i = gain, i
        if best_i is not None:
            greedy[best_i] |= 1 << j
    if leaf_ok(greedy):
        state["inc"] = float(sum(
            forward(p, Bundle(mask, m)) for p, mask in zip(networks, greedy)
        ))
        state["best"] = tuple(greedy)

    def rec(j: int, masks: list[int], pres):
        if state["timed_out"]:
            return
        state["nodes"] += 1
        if state["nodes"] % 4096 == 0 and \
                time.perf_counter() - start > cfg.timeout:
            state["timed_out"] = True
            return
        ub = 0.0
        for i in range(n):
            ub += tail_value(i, pres[i])
        if j == m:
            if leaf_ok(masks) and ub > state["inc"]:
                state["inc"] = ub
                state["best"] = tuple(masks)
            return
        cut = _gap_cut(state["inc"], cfg.gap)
        if ub <= cut:
            if ub > state["inc"] + _PRUNE_TOL:
                state["pruned_bound"] = max(state["pruned_bound"], ub)
            return
        bit = 1 << j
        for i in range(n):
            masks[i] |= bit
            rec(j + 1, masks,
                [pres[h] if h == i else pres[h] - cols[h][j] for h in range(n)])
            masks[i] &= ~bit
        rec(j + 1, masks, [pres[h] - cols[h][j] for h in range(n)])

    rec(0, [0] * n, list(root_pre))
    wall = time.perf_counter() - start
    if state["best"] is None:
        status = "timeout" if state["timed_out"] else "infeasible"
        return Solution(None, -math.inf, -math.inf, status, state["nodes"], wall)
    allocation = Allocation(tuple(Bundle(mask, m) for mask in state["best"]))
    # re-evaluate without the incremental drift of the search
    objective = float(sum(
        forward(p, b) for p, b in zip(networks, allocation)
    ))
    bound = max(objective, state["pruned_bound"])
    if state["timed_out"]:
        status = "timeout"
    elif bound <= objective + _PRUNE_TOL:
        status, bound = "optimal", objective
    else:
        status = "gap-reached"
    return Solution(allocation, objective, bound, status, state["nodes"], wall)


def brute_force(networks, m: int | None = None) -> tuple[float, Allocation]:
    """Exhaustive maximum over all feasible allocations.

    Deterministic tie-break: the allocation whose mixed-radix code
    (digit j = assignee of item j, 0 meaning unassigned) is smallest.
    """
    networks = list(networks)
    if m is None:
        m = networks[0].num_items
    n = len(networks)
    total = (n + 1) ** m
    if total > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(
            f"(n+1)^m = {total} exceeds the {BRUTE_FORCE_LIMIT} limit"
        )
    radix = (n + 1) ** np.arange(m, dtype=np.int64)
    best_val = -math.inf
    best_code = 0
    chunk = 1 << 14
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        codes = np.arange(lo, hi, dtype=np.int64)
        digits = (codes[:, None] // radix) % (n + 1)
        values = np.zeros(hi - lo)
        for i, p in enumerate(networks):
            bits = (digits == i + 1).astype(np.float64)
            values += forward_batch(p, bits)
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


@dataclass(frozen=True)
class BenchRow:
    architecture: tuple[int, ...]
    encoding: str  # "mvnn" | "relu"
    instance: int
    wall_time: float
    status: str
    objective: float


def runtime_compare(architectures, cfg: SolveConfig | None = None,
                    instances: int = 5, bidders: int = 3,
                    seed: int = 0, prune_model: bool = True) -> list[BenchRow]:
    """Time the bounded-ReLU encoding against the plain-ReLU encoding on
    random networks of matched architectures. Observational only."""
    from .prefgen import sample_mvnn_params, sample_relu_params

    if cfg is None:
        cfg = SolveConfig(timeout=200.0)
    rows: list[BenchRow] = []
    for arch_idx, arch in enumerate(architectures):
        arch = tuple(int(w) for w in arch)
        m = arch[0]
        for inst in range(instances):
            mvnns = [
                sample_mvnn_params(arch, seed=seed, stream=("bench", arch_idx, inst, i))
                for i in range(bidders)
            ]
            relus = [
                sample_relu_params(arch, seed=seed, stream=("relu", arch_idx, inst, i))
                for i in range(bidders)
            ]
            model = encode_wdp(mvnns, m, prune_model=prune_model)
            sol = solve_milp(model, cfg)
            rows.append(BenchRow(arch, "mvnn", inst, sol.wall_time, sol.status,
                                 sol.objective))
            model = encode_wdp_relu(relus, m, prune_model=prune_model)
            sol = solve_milp(model, cfg)
            rows.append(BenchRow(arch, "relu", inst, sol.wall_time, sol.status,
                                 sol.objective))
    return rows
