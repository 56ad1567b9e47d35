"""The machine-learning-powered iterative combinatorial auction.

Per round, each bidder's surrogate network is fitted to their reports;
candidate queries come from solving surrogate winner-determination
problems on the main economy (all bidders) and on sampled marginal
economies (one bidder removed). Already-queried candidates trigger a
restricted re-solve that forbids the bidder's reported bundles, so every
bidder receives exactly ``q_round`` new queries per round. After the
query budget is spent, the final allocation maximizes reported welfare
and payments follow the VCG rule applied to reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Allocation,
    Bundle,
    ReportSet,
    ValueOracle,
    VALUE_TOL,
    efficiency_loss,
    reported_social_welfare,
    social_welfare,
)
from .errors import (
    ConfigError,
    DataError,
    QueryExhaustedError,
    TrainingFailureError,
)
from .milp import encode_wdp
from .mvnn import MvnnOracle, MvnnParams, TrainConfig, train
from .prefgen import optimal_allocation
from .seeding import combined_seed, substream
from .solver import SolveConfig, monotone_bnb, solve_milp

WDP_SOLVERS = ("monotone-bnb", "milp")


@dataclass(frozen=True)
class MlcaConfig:
    q_init: int = 40
    q_max: int = 100
    q_round: int = 4
    seed: int = 0
    early_stop_on_efficient: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_widths: tuple[int, ...] = (8, 8)
    solve: SolveConfig = field(default_factory=SolveConfig)
    wdp_solver: str = "monotone-bnb"
    strict_retrain: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths",
                           tuple(int(w) for w in self.hidden_widths))
        if self.q_init < 1:
            raise ConfigError("q_init must be >= 1")
        if self.q_round < 1:
            raise ConfigError("q_round must be >= 1")
        if self.q_max < self.q_init:
            raise ConfigError("q_max must be >= q_init")
        if self.wdp_solver not in WDP_SOLVERS:
            raise ConfigError(f"unknown wdp solver {self.wdp_solver!r}")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ConfigError("hidden widths must be positive")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    queries: int
    efficiency_loss: float
    revenue: float
    runtime_s: float
    novelty_fallbacks: int = 0
    duplicate_resolves: int = 0

    def to_json_dict(self) -> dict:
        return {
            "round": self.round, "queries": self.queries,
            "efficiency_loss": self.efficiency_loss, "revenue": self.revenue,
            "runtime_s": self.runtime_s,
            "novelty_fallbacks": self.novelty_fallbacks,
            "duplicate_resolves": self.duplicate_resolves,
        }


@dataclass(frozen=True)
class AuctionResult:
    method: str
    seed: int
    allocation: Allocation
    payments: tuple[float, ...]
    reports: ReportSet
    efficiency_loss: float
    revenue: float
    relative_revenue: float
    optimal_value: float
    achieved_value: float
    path: tuple[RoundRecord, ...]
    query_counts: tuple[int, ...]
    wall_time: float

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "allocation": [str(b) for b in self.allocation],
            "payments": list(self.payments),
            "efficiency_loss": self.efficiency_loss,
            "revenue": self.revenue,
            "relative_revenue": self.relative_revenue,
            "optimal_value": self.optimal_value,
            "achieved_value": self.achieved_value,
            "query_counts": list(self.query_counts),
            "path": [r.to_json_dict() for r in self.path],
            "reports": [
                [[str(b), v] for b, v in bidder] for bidder in self.reports.reports
            ],
            "wall_time_s": self.wall_time,
        }


# ---------------------------------------------------------------------------
# reported-welfare WDP and VCG payments


def wdp_over_reports(r: ReportSet, exclude: frozenset[int] = frozenset()
                     ) -> Allocation:
    """Allocation maximizing reported welfare; every bidder receives one
    of their reported bundles or the empty bundle. Bidders in ``exclude``
    contribute nothing and receive the empty bundle."""
    n = r.n
    m = None
    for i in range(n):
        for b, _ in r.reports[i]:
            m = b.m
            break
        if m is not None:
            break
    if m is None:
        raise DataError("cannot infer the item count from an empty report set")

    options: list[list[tuple[int, float]]] = []
    for i in range(n):
        if i in exclude:
            options.append([(0, 0.0)])
            continue
        opts = sorted(
            ((b.mask, v) for b, v in r.reports[i]),
            key=lambda mv: (-mv[1], mv[0]),
        )
        if all(mask != 0 for mask, _ in opts):
            opts.append((0, 0.0))
        options.append(opts)
    suffix_best = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix_best[i] = suffix_best[i + 1] + max(v for _, v in options[i])

    best_value = -1.0
    best_masks: tuple[int, ...] | None = None
    masks = [0] * n

    def rec(i: int, used: int, value: float):
        nonlocal best_value, best_masks
        if value + suffix_best[i] <= best_value:
            return
        if i == n:
            if value > best_value:
                best_value = value
                best_masks = tuple(masks)
            return
        for mask, v in options[i]:
            if mask & used:
                continue
            masks[i] = mask
            rec(i + 1, used | mask, value + v)
        masks[i] = 0

    rec(0, 0, 0.0)
    assert best_masks is not None
    return Allocation(tuple(Bundle(mask, m) for mask in best_masks))


def vcg_payments(r: ReportSet) -> tuple[float, ...]:
    """VCG payments from reports: what the others would get without the
    bidder, minus what they get alongside the bidder."""
    n = r.n
    a_main = wdp_over_reports(r)
    payments = []
    for i in range(n):
        others_with_i = reported_social_welfare(a_main, r, exclude=frozenset([i]))
        a_marginal = wdp_over_reports(r, exclude=frozenset([i]))
        others_without_i = reported_social_welfare(
            a_marginal, r, exclude=frozenset([i])
        )
        p = others_without_i - others_with_i
        if p < -VALUE_TOL:
            raise DataError(
                f"negative VCG payment {p} for bidder {i}; reported-WDP"
                " solutions are inconsistent"
            )
        payments.append(max(0.0, p))
    return tuple(payments)


# ---------------------------------------------------------------------------
# query generation


def _economy_wdp(networks: dict[int, MvnnParams], economy: list[int], m: int,
                 cfg: MlcaConfig,
                 excluded_masks: dict[int, set[int]] | None = None
                 ) -> dict[int, Bundle] | None:
    """Surrogate WDP over one economy; returns bidder -> candidate bundle,
    or None when the exclusion constraints leave nothing feasible."""
    nets = [networks[i] for i in economy]
    pos_excluded = None
    if excluded_masks:
        pos_excluded = {
            economy.index(i): set(v) for i, v in excluded_masks.items()
            if i in economy and v
        }
    if cfg.wdp_solver == "monotone-bnb":
        sol = monotone_bnb(nets, m, cfg.solve, excluded=pos_excluded)
        if sol.allocation is None:
            return None
    else:
        bundle_excl = None
        if pos_excluded:
            bundle_excl = {
                pos: [Bundle(mask, m) for mask in sorted(ms)]
                for pos, ms in pos_excluded.items()
            }
        model = encode_wdp(nets, m, prune_model=True,
                           excluded_bundles=bundle_excl)
        sol = solve_milp(model, cfg.solve)
        if sol.allocation is None:
            return None
    return {i: sol.allocation[pos] for pos, i in enumerate(economy)}


def _random_unreported(m: int, known: set[int], rng: np.random.Generator) -> Bundle:
    space = 1 << m
    if len(known) >= space:
        raise QueryExhaustedError("all bundles already reported")
    if space <= (1 << 22):
        candidates = [mask for mask in range(space) if mask not in known]
        return Bundle(candidates[int(rng.integers(len(candidates)))], m)
    while True:
        mask = int(rng.integers(space))
        if mask not in known:
            return Bundle(mask, m)


def next_queries(economy, r: ReportSet, cfg: MlcaConfig,
                 networks: dict[int, MvnnParams] | None = None,
                 pending: dict[int, list[Bundle]] | None = None,
                 needed=None, rng: np.random.Generator | None = None,
                 stats: dict | None = None) -> dict[int, Bundle]:
    """One estimation + optimization step for the given economy.

    Returns a new (never-reported, never-pending) bundle for every bidder
    in ``needed`` (default: the whole economy). Pre-trained networks may
    be supplied; otherwise each bidder is fitted to their reports here.
    """
    economy = sorted(int(i) for i in economy)
    if not economy:
        raise ConfigError("economy must contain at least one bidder")
    m = None
    for i in economy:
        if not r.reports[i]:
            raise DataError(f"bidder {i} has no reports to fit")
        m = r.reports[i][0][0].m
    if networks is None:
        networks = {}
        for i in economy:
            networks[i] = _fit_bidder(r, i, m, cfg, round_index=0)
    if rng is None:
        rng = substream(cfg.seed, "fallback", 0)
    pending = pending or {}
    needed = economy if needed is None else sorted(set(needed))
    stats = stats if stats is not None else {}

    candidate = _economy_wdp(networks, economy, m, cfg)
    if candidate is None:
        raise ConfigError("surrogate WDP has no feasible allocation")
    out: dict[int, Bundle] = {}
    for i in needed:
        known = {b.mask for b in r.bundles(i)}
        known.update(b.mask for b in pending.get(i, ()))
        q_i = candidate[i]
        if q_i.mask in known:
            stats["duplicate_resolves"] = stats.get("duplicate_resolves", 0) + 1
            restricted = _economy_wdp(
                networks, economy, m, cfg, excluded_masks={i: known}
            )
            if restricted is not None and restricted[i].mask not in known:
                q_i = restricted[i]
            else:
                stats["novelty_fallbacks"] = stats.get("novelty_fallbacks", 0) + 1
                q_i = _random_unreported(m, known, rng)
        out[i] = q_i
    return out


def _fit_bidder(r: ReportSet, i: int, m: int, cfg: MlcaConfig,
                round_index: int) -> MvnnParams:
    widths = [m, *cfg.hidden_widths, 1]
    data = list(r.reports[i])
    seed = combined_seed(cfg.seed, round_index, i)
    try:
        return train(data, widths, cfg.train, seed=seed).params
    except TrainingFailureError as exc:
        raise TrainingFailureError(
            f"bidder {i}, round {round_index}: {exc}", best=exc.best
        ) from exc


# ---------------------------------------------------------------------------
# full mechanisms


def _initial_reports(oracle: ValueOracle, count: int,
                     rng: np.random.Generator) -> list[tuple[Bundle, float]]:
    """The known-value empty bundle plus ``count`` distinct random nonempty
    bundles (capped at the bundle-space size)."""
    m = oracle.num_items
    space = (1 << m) - 1
    count = min(count, space)
    if space <= (1 << 22):
        masks = rng.choice(space, size=count, replace=False) + 1
        masks = [int(x) for x in masks]
    else:
        seen: set[int] = set()
        masks = []
        while len(masks) < count:
            mask = int(rng.integers(1, space + 1))
            if mask not in seen:
                seen.add(mask)
                masks.append(mask)
    reports = [(Bundle.empty(m), 0.0)]
    for mask in masks:
        b = Bundle(mask, m)
        reports.append((b, float(oracle.evaluate(b))))
    return reports


def _snapshot(r: ReportSet, oracles, optimal_value: float,
              round_index: int, queries: int, started: float,
              stats: dict) -> tuple[RoundRecord, Allocation, float]:
    a_r = wdp_over_reports(r)
    achieved = social_welfare(a_r, oracles)
    loss = efficiency_loss(achieved, optimal_value)
    payments = vcg_payments(r)
    record = RoundRecord(
        round=round_index, queries=queries, efficiency_loss=loss,
        revenue=float(sum(payments)), runtime_s=time.perf_counter() - started,
        novelty_fallbacks=stats.get("novelty_fallbacks", 0),
        duplicate_resolves=stats.get("duplicate_resolves", 0),
    )
    return record, a_r, achieved


def run_mlca(oracles, cfg: MlcaConfig) -> AuctionResult:
    """Algorithmic flow: random initial queries, then rounds of surrogate
    training plus main/marginal economy queries, then the reported-welfare
    allocation and VCG payments."""
    started = time.perf_counter()
    oracles = list(oracles)
    n = len(oracles)
    if n < 1:
        raise ConfigError("need at least one bidder oracle")
    m = oracles[0].num_items
    if any(o.num_items != m for o in oracles):
        raise ConfigError("oracles disagree on the item count")
    if cfg.q_round > n:
        raise ConfigError(
            f"q_round={cfg.q_round} needs q_round-1 <= n-1 marginal economies"
        )
    if cfg.q_max > (1 << m) - 1:
        raise ConfigError(
            f"q_max={cfg.q_max} exceeds the {(1 << m) - 1} nonempty bundles"
        )
    optimal_value, _ = optimal_allocation(oracles)

    lists = [
        _initial_reports(oracles[i], cfg.q_init, substream(cfg.seed, "init", i))
        for i in range(n)
    ]
    r = ReportSet.from_lists(lists)
    query_counts = [cfg.q_init] * n

    stats: dict[str, int] = {}
    path: list[RoundRecord] = []
    record, a_r, achieved = _snapshot(
        r, oracles, optimal_value, 0, cfg.q_init, started, stats
    )
    path.append(record)

    rounds = (cfg.q_max - cfg.q_init) // cfg.q_round
    stopped_early = record.efficiency_loss <= 1e-12 and cfg.early_stop_on_efficient
    for k in range(1, rounds + 1):
        if stopped_early:
            break
        networks: dict[int, MvnnParams] | None = None
        if not cfg.strict_retrain:
            networks = {i: _fit_bidder(r, i, m, cfg, k) for i in range(n)}
        pending: dict[int, list[Bundle]] = {i: [] for i in range(n)}
        all_bidders = list(range(n))
        for i in range(n):
            others = [j for j in all_bidders if j != i]
            rng_q = substream(cfg.seed, "queries", k, i)
            sampled = [others[int(idx)] for idx in
                       rng_q.choice(len(others), size=cfg.q_round - 1,
                                    replace=False)] if cfg.q_round > 1 else []
            for j in sampled:
                economy = [b for b in all_bidders if b != j]
                econ_nets = networks
                if cfg.strict_retrain or econ_nets is None:
                    econ_nets = {b: _fit_bidder(r, b, m, cfg, k) for b in economy}
                new = next_queries(
                    economy, r, cfg, networks=econ_nets, pending=pending,
                    needed=[i], rng=substream(cfg.seed, "fallback", k, i, j),
                    stats=stats,
                )
                pending[i].append(new[i])
        main_nets = networks
        if cfg.strict_retrain or main_nets is None:
            main_nets = {b: _fit_bidder(r, b, m, cfg, k) for b in all_bidders}
        new = next_queries(
            all_bidders, r, cfg, networks=main_nets, pending=pending,
            rng=substream(cfg.seed, "fallback", k, n), stats=stats,
        )
        for i in range(n):
            pending[i].append(new[i])
        for i in range(n):
            responses = [(b, float(oracles[i].evaluate(b))) for b in pending[i]]
            r = r.with_reports(i, responses)
            query_counts[i] += len(responses)
        record, a_r, achieved = _snapshot(
            r, oracles, optimal_value, k, query_counts[0], started, stats
        )
        path.append(record)
        if cfg.early_stop_on_efficient and record.efficiency_loss <= 1e-12:
            break

    payments = vcg_payments(r)
    revenue = float(sum(payments))
    final_loss = path[-1].efficiency_loss
    return AuctionResult(
        method="mlca", seed=cfg.seed, allocation=a_r, payments=payments,
        reports=r, efficiency_loss=final_loss, revenue=revenue,
        relative_revenue=revenue / optimal_value, optimal_value=optimal_value,
        achieved_value=achieved, path=tuple(path),
        query_counts=tuple(query_counts),
        wall_time=time.perf_counter() - started,
    )


def random_search(oracles, q_max: int, seed: int = 0) -> AuctionResult:
    """Pure random elicitation baseline: q_max random queries per bidder,
    then the reported-welfare allocation and VCG payments."""
    started = time.perf_counter()
    oracles = list(oracles)
    n = len(oracles)
    if n < 1:
        raise ConfigError("need at least one bidder oracle")
    m = oracles[0].num_items
    optimal_value, _ = optimal_allocation(oracles)
    lists = [
        _initial_reports(oracles[i], q_max, substream(seed, "init", i))
        for i in range(n)
    ]
    r = ReportSet.from_lists(lists)
    a_r = wdp_over_reports(r)
    achieved = social_welfare(a_r, oracles)
    loss = efficiency_loss(achieved, optimal_value)
    payments = vcg_payments(r)
    revenue = float(sum(payments))
    record = RoundRecord(
        round=0, queries=min(q_max, (1 << m) - 1), efficiency_loss=loss,
        revenue=revenue, runtime_s=time.perf_counter() - started,
    )
    return AuctionResult(
        method="random-search", seed=seed, allocation=a_r, payments=payments,
        reports=r, efficiency_loss=loss, revenue=revenue,
        relative_revenue=revenue / optimal_value, optimal_value=optimal_value,
        achieved_value=achieved, path=(record,),
        query_counts=(min(q_max, (1 << m) - 1),) * n,
        wall_time=time.perf_counter() - started,
    )
