"""Command-line front end.

One JSON config document drives every command; flags override config
fields. All outputs are deterministic given (config, seed) -- the only
timestamped artifact is run_meta.json, kept separate so that reruns
produce byte-identical result files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .construct import ValueTable, exact_mvnn, interpolate
from .core import Bundle, VALUE_TOL
from .errors import (
    ConfigError,
    DataError,
    LpParseError,
    MonotonicityError,
    MvnnAuctionError,
    SolverError,
    TrainingFailureError,
)
from .lpformat import parse_lp, write_lp
from .milp import encode_wdp, encode_wdp_relu
from .mlca import MlcaConfig, random_search, run_mlca
from .mvnn import (
    MvnnOracle,
    MvnnParams,
    TrainConfig,
    forward_batch,
    is_projected,
    train,
)
from .prefgen import DomainSpec, domain_oracles, random_mvnn_oracle
from .seeding import substream
from .solver import SolveConfig, monotone_bnb, runtime_compare, solve_milp

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_TRAINING = 5
EXIT_SOLVER = 6


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config document must be a JSON object")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    value = cfg.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(value)


def _dataclass_from(section: dict, cls, what: str):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} fields: {sorted(unknown)}")
    for key in ("hidden_widths", "architecture"):
        if key in section and isinstance(section[key], list):
            section[key] = tuple(section[key])
    try:
        return cls(**section)
    except MvnnAuctionError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_meta(out: Path, command: str, started: float):
    _write_json(out / "run_meta.json", {
        "command": command,
        "package_version": __version__,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "duration_s": time.perf_counter() - started,
    })


def _load_dataset(path: str) -> list[tuple[Bundle, float]]:
    data: list[tuple[Bundle, float]] = []
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or (line_no == 1 and row[0].strip() == "bundle_bits"):
                continue
            if len(row) != 2:
                raise DataError(
                    f"{path}:{line_no}: expected 'bundle_bits,value', got {row}"
                )
            bits, value = row[0].strip(), row[1].strip()
            if not bits or any(c not in "01" for c in bits):
                raise DataError(f"{path}:{line_no}: malformed bundle {bits!r}")
            try:
                v = float(value)
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: malformed value {value!r}") from exc
            data.append((Bundle.from_string(bits), v))
    if not data:
        raise DataError(f"dataset {path} is empty")
    return data


def _load_model(path: str) -> MvnnParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model {path} is not valid JSON: {exc}") from exc
    return MvnnParams.from_json_dict(doc)


# ---------------------------------------------------------------------------
# metrics


def r_squared(true_vals: np.ndarray, preds: np.ndarray) -> float:
    ss_res = float(np.sum((true_vals - preds) ** 2))
    ss_tot = float(np.sum((true_vals - float(np.mean(true_vals))) ** 2))
    if ss_tot < 1e-18:
        return 1.0 if ss_res < 1e-12 else 0.0
    return 1.0 - ss_res / ss_tot


def kendall_tau(true_vals: np.ndarray, preds: np.ndarray) -> float:
    from scipy.stats import kendalltau

    tau = kendalltau(true_vals, preds).statistic
    return 0.0 if tau is None or math.isnan(tau) else float(tau)


def _mean_ci(values) -> tuple[float, float]:
    arr = np.asarray(list(values), dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg: dict, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    section = _section(cfg, "train")
    dataset_path = args.dataset or section.pop("dataset", None)
    if not dataset_path:
        raise ConfigError("train needs a dataset (config train.dataset or --dataset)")
    eval_path = section.pop("eval", None)
    holdout_fraction = float(section.pop("holdout_fraction", 0.2))
    hidden = tuple(section.pop("hidden_widths", (8, 8)))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    train_cfg = _dataclass_from(section, TrainConfig, "train config")

    data = _load_dataset(dataset_path)
    m = data[0][0].m
    if eval_path:
        train_data, eval_data = data, _load_dataset(eval_path)
    elif holdout_fraction > 0 and len(data) > 4:
        rng = substream(seed, "holdout")
        order = rng.permutation(len(data))
        cut = max(1, int(round(holdout_fraction * len(data))))
        eval_data = [data[i] for i in order[:cut]]
        train_data = [data[i] for i in order[cut:]]
    else:
        train_data, eval_data = data, data

    result = train(train_data, [m, *hidden, 1], train_cfg, seed=seed)
    params = result.params

    xs = np.stack([b.vector for b, _ in eval_data])
    true_vals = np.array([v for _, v in eval_data])
    preds = forward_batch(params, xs, activation=train_cfg.activation)
    metrics = {
        "r2": r_squared(true_vals, preds),
        "kendall_tau": kendall_tau(true_vals, preds),
        "mae": float(np.mean(np.abs(true_vals - preds))),
        "train_correlation": result.train_correlation,
        "attempts": result.attempts,
        "eval_points": len(eval_data),
        "train_points": len(train_data),
    }
    _write_json(out / "model.json", params.to_json_dict())
    _write_csv(out / "metrics.csv", list(metrics), [list(metrics.values())])
    if not args.no_plots:
        from .report import fit_scatter_figure

        fit_scatter_figure(true_vals, preds, out / "fit_scatter.png")
    print(f"r2={metrics['r2']:.4f} kendall_tau={metrics['kendall_tau']:.4f} "
          f"mae={metrics['mae']:.4g} attempts={result.attempts}")
    _write_meta(out, "train", started)
    return EXIT_OK


def cmd_construct(cfg: dict, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    section = _section(cfg, "construct")
    dataset_path = args.dataset or section.get("dataset")
    if not dataset_path:
        raise ConfigError("construct needs a dataset (config construct.dataset"
                          " or --dataset)")
    mode = section.get("mode", "interpolate")
    data = _load_dataset(dataset_path)
    m = data[0][0].m
    if mode == "exact":
        table = ValueTable.from_dict({b: v for b, v in data}, m)
        params = exact_mvnn(table)
    elif mode == "interpolate":
        params = interpolate(data)
    else:
        raise ConfigError(f"unknown construct mode {mode!r}")
    xs = np.stack([b.vector for b, _ in data])
    true_vals = np.array([v for _, v in data])
    errors = np.abs(forward_batch(params, xs) - true_vals)
    _write_json(out / "model.json", params.to_json_dict())
    _write_csv(out / "construct_report.csv",
               ["bundle_bits", "value", "abs_error"],
               [[str(b), v, float(e)] for (b, v), e in zip(data, errors)])
    print(f"constructed [{', '.join(str(w) for w in params.widths)}] network; "
          f"max abs error {float(errors.max()):.3g}")
    _write_meta(out, "construct", started)
    return EXIT_OK


def cmd_wdp(cfg: dict, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    section = _section(cfg, "wdp")
    model_paths = args.models or section.get("models")
    lp_input = section.get("lp")
    solve_cfg = _dataclass_from(_section(cfg, "solve"), SolveConfig, "solve config")
    prune_model = not args.no_prune and section.get("prune", True)

    if lp_input:
        model = parse_lp(Path(lp_input).read_text(encoding="utf-8"))
        warm = None
    elif model_paths:
        networks = [_load_model(p) for p in model_paths]
        as_relu = bool(section.get("relu", False))
        if as_relu:
            model = encode_wdp_relu(networks, prune_model=prune_model)
            warm = None
        else:
            model = encode_wdp(networks, prune_model=prune_model)
            bnb = monotone_bnb(networks, cfg=solve_cfg)
            warm = (bnb.objective, bnb.allocation) if bnb.allocation else None
    else:
        raise ConfigError("wdp needs model files (wdp.models / --models) or wdp.lp")

    solution = solve_milp(model, solve_cfg, warm=warm)
    _write_json(out / "solution.json", solution.to_json_dict())
    if args.export_lp:
        (out / "model.lp").write_text(write_lp(model), encoding="utf-8")
    print(f"status={solution.status} objective={solution.objective:.6g} "
          f"bound={solution.bound:.6g} nodes={solution.node_count}")
    _write_meta(out, "wdp", started)
    return EXIT_OK


def _mlca_one_seed(payload):
    domain_dict, mlca_dict, train_dict, solve_dict, seed = payload
    spec = DomainSpec.from_json_dict({**domain_dict, "seed": seed})
    oracles = domain_oracles(spec)
    train_cfg = _dataclass_from(dict(train_dict), TrainConfig, "train config")
    solve_cfg = _dataclass_from(dict(solve_dict), SolveConfig, "solve config")
    mlca_cfg = _dataclass_from(
        {**mlca_dict, "seed": seed, "train": train_cfg, "solve": solve_cfg},
        MlcaConfig, "mlca config",
    )
    mlca_result = run_mlca(oracles, mlca_cfg)
    rs_result = random_search(oracles, mlca_cfg.q_max, seed=seed)
    return seed, mlca_result, rs_result


def cmd_mlca(cfg: dict, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    section = _section(cfg, "mlca")
    seeds = section.pop("seeds", None)
    if seeds is None:
        base = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        num = int(section.pop("num_seeds", 1))
        seeds = list(range(base, base + num))
    else:
        seeds = [int(s) for s in seeds]
        section.pop("num_seeds", None)
    domain_dict = _section(cfg, "domain")
    train_dict = _section(cfg, "train")
    solve_dict = _section(cfg, "solve")
    payloads = [(domain_dict, section, train_dict, solve_dict, s) for s in seeds]

    if args.workers and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_mlca_one_seed, payloads))
    else:
        results = [_mlca_one_seed(p) for p in payloads]
    results.sort(key=lambda t: t[0])

    path_rows, agg_rows = [], []
    mlca_paths, rs_finals = [], []
    for seed, mlca_result, rs_result in results:
        _write_json(out / f"mlca_seed{seed}.json", mlca_result.to_json_dict())
        _write_json(out / f"rs_seed{seed}.json", rs_result.to_json_dict())
        for rec in mlca_result.path:
            path_rows.append([seed, rec.round, rec.queries,
                              rec.efficiency_loss, rec.revenue, rec.runtime_s])
        mlca_paths.append([(rec.queries, rec.efficiency_loss)
                           for rec in mlca_result.path])
        rs_finals.append((rs_result.path[-1].queries,
                          rs_result.efficiency_loss))
    _write_csv(out / "efficiency_path.csv",
               ["seed", "round", "queries", "efficiency_loss", "revenue",
                "runtime_s"], path_rows)

    for method, pick in (("mlca", 1), ("random-search", 2)):
        losses = [r[pick].efficiency_loss for r in results]
        revenues = [r[pick].relative_revenue for r in results]
        times = [r[pick].wall_time for r in results]
        loss_mean, loss_ci = _mean_ci(losses)
        rev_mean, rev_ci = _mean_ci(revenues)
        agg_rows.append([method, len(seeds), loss_mean, loss_ci, rev_mean,
                         rev_ci, float(np.mean(times))])
    _write_csv(out / "aggregate.csv",
               ["method", "seeds", "efficiency_loss_mean", "efficiency_loss_ci95",
                "relative_revenue_mean", "relative_revenue_ci95",
                "mean_runtime_s"], agg_rows)
    if not args.no_plots:
        from .report import efficiency_path_figure

        efficiency_path_figure(mlca_paths, rs_finals,
                               out / "efficiency_path.png")
    for row in agg_rows:
        print(f"{row[0]}: efficiency loss {row[2]:.4f} +- {row[3]:.4f}, "
              f"relative revenue {row[4]:.4f}")
    _write_meta(out, "mlca", started)
    return EXIT_OK


def cmd_bench(cfg: dict, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    section = _section(cfg, "bench")
    architectures = section.get("architectures")
    if not architectures:
        raise ConfigError("bench needs bench.architectures")
    instances = int(section.get("instances", 5))
    bidders = int(section.get("bidders", 3))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    solve_section = _section(cfg, "solve")
    solve_section.setdefault("timeout", 200.0)
    solve_cfg = _dataclass_from(solve_section, SolveConfig, "solve config")

    rows = runtime_compare(architectures, solve_cfg, instances=instances,
                           bidders=bidders, seed=seed,
                           prune_model=not args.no_prune)
    agg = []
    archs = sorted({r.architecture for r in rows}, key=lambda a: (len(a), a))
    for arch in archs:
        label = "-".join(str(w) for w in arch)
        means = {}
        for encoding in ("mvnn", "relu"):
            sub = [r for r in rows if r.architecture == arch
                   and r.encoding == encoding]
            mean, ci = _mean_ci([r.wall_time for r in sub])
            timeouts = sum(1 for r in sub if r.status == "timeout")
            agg.append([label, encoding, mean, ci, timeouts])
            means[encoding] = mean
        ratio = means["mvnn"] / means["relu"] if means["relu"] > 0 else math.inf
        print(f"{label}: mvnn {means['mvnn']:.3f}s vs relu {means['relu']:.3f}s "
              f"(ratio {ratio:.2f})")
    _write_csv(out / "bench.csv",
               ["architecture", "encoding", "mean_s", "ci95_s", "timeouts"], agg)
    _write_csv(out / "bench_raw.csv",
               ["architecture", "encoding", "instance", "wall_time_s", "status",
                "objective"],
               [["-".join(str(w) for w in r.architecture), r.encoding,
                 r.instance, r.wall_time, r.status, r.objective] for r in rows])
    if not args.no_plots:
        from .report import runtime_figure

        runtime_figure(rows, out / "runtime.png")
    _write_meta(out, "bench", started)
    return EXIT_OK


def cmd_gen(cfg: dict, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    domain_dict = _section(cfg, "domain")
    if args.seed is not None:
        domain_dict["seed"] = args.seed
    spec = DomainSpec.from_json_dict(domain_dict)
    if spec.m > 12:
        raise ConfigError(f"gen dumps full tables only for m <= 12, got {spec.m}")
    _write_json(out / "domain.json", spec.to_json_dict())
    for i in range(spec.n):
        oracle = random_mvnn_oracle(spec, i)
        masks = np.arange(1 << spec.m)
        xs = ((masks[:, None] >> np.arange(spec.m)) & 1).astype(np.float64)
        values = forward_batch(oracle.params, xs)
        rows = [[str(Bundle(int(mask), spec.m)), float(v)]
                for mask, v in zip(masks, values)]
        _write_csv(out / f"table_bidder{i}.csv", ["bundle_bits", "value"], rows)
    print(f"wrote {spec.n} value tables over {1 << spec.m} bundles to {out}")
    _write_meta(out, "gen", started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvnn-auction",
        description="Monotone-value networks, winner determination and "
                    "ML-powered combinatorial auctions.",
    )
    parser.add_argument("command",
                        choices=["train", "construct", "wdp", "mlca", "bench",
                                 "gen"])
    parser.add_argument("--config", help="JSON config document")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--export-lp", action="store_true",
                        help="also write the encoded model in LP format")
    parser.add_argument("--no-prune", action="store_true",
                        help="disable interval-arithmetic constraint removal")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel seeds for the mlca command")
    parser.add_argument("--no-plots", action="store_true",
                        help="skip figure rendering")
    parser.add_argument("--dataset", help="dataset CSV (train/construct)")
    parser.add_argument("--models", nargs="*", help="model JSON files (wdp)")
    return parser


_COMMANDS = {
    "train": cmd_train,
    "construct": cmd_construct,
    "wdp": cmd_wdp,
    "mlca": cmd_mlca,
    "bench": cmd_bench,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, LpParseError, MonotonicityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingFailureError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MvnnAuctionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
