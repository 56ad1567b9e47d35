"""Monotone-value neural networks: bounded-ReLU forward pass, analytic
gradients, and constrained training.

A network with K layers holds K weight matrices and K-1 hidden bias
vectors; the last layer is a linear readout with its bias fixed to 0.
With all weights >= 0 and all hidden biases <= 0, the network is
monotone in every input bit and evaluates to exactly 0 on the empty
bundle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import Bundle, ValueOracle
from .errors import (
    ConstraintViolationError,
    DataError,
    DimensionError,
    ParameterError,
    TrainingFailureError,
)

VARIANTS = ("relu-projected", "abs", "relu", "unconstrained")
OPTIMIZERS = ("adaptive-moment", "plain-gradient")
LOSSES = ("absolute", "squared")
ACTIVATIONS = ("brelu", "relu")


def brelu(z, t: float):
    """Bounded ReLU min(t, max(0, z)), elementwise."""
    if t <= 0:
        raise ParameterError(f"bReLU cutoff must be > 0, got {t}")
    return np.minimum(t, np.maximum(0.0, z))


def _freeze(a: np.ndarray) -> np.ndarray:
    # always copy: never flip writeability on a caller-owned array
    a = np.array(a, dtype=np.float64, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MvnnParams:
    """Layered parameters of a (candidate) MVNN.

    ``weights[k]`` has shape (d_{k+1}, d_k); ``biases[k]`` belongs to hidden
    layer k+1 and has length d_{k+1}. The container itself does not enforce
    the sign constraints -- see :func:`project` / :func:`is_projected` --
    so the same structure also carries the unconstrained baseline networks.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    cutoff: float = 1.0

    def __post_init__(self):
        ws = tuple(_freeze(w) for w in self.weights)
        bs = tuple(_freeze(b) for b in self.biases)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        if self.cutoff <= 0:
            raise ParameterError(f"cutoff must be > 0, got {self.cutoff}")
        if len(ws) < 1:
            raise DimensionError("network needs at least a readout layer")
        if len(bs) != len(ws) - 1:
            raise DimensionError(
                f"{len(ws)} weight layers require {len(ws) - 1} hidden biases, "
                f"got {len(bs)}"
            )
        for k, w in enumerate(ws):
            if w.ndim != 2:
                raise DimensionError(f"layer {k + 1}: weights must be 2-d")
            if k > 0 and w.shape[1] != ws[k - 1].shape[0]:
                raise DimensionError(
                    f"layer {k + 1}: expects {ws[k - 1].shape[0]} inputs, "
                    f"got {w.shape[1]}"
                )
            if k < len(bs) and bs[k].shape != (w.shape[0],):
                raise DimensionError(f"layer {k + 1}: bias shape mismatch")
        if ws[-1].shape[0] != 1:
            raise DimensionError("readout layer must have a single output")

    @property
    def num_items(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.num_items, *self.hidden_widths, 1)

    def equals(self, other: "MvnnParams") -> bool:
        return (
            self.cutoff == other.cutoff
            and len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def to_json_dict(self) -> dict:
        layers = []
        for k, w in enumerate(self.weights):
            bias = self.biases[k] if k < len(self.biases) else np.zeros(w.shape[0])
            layers.append({
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "weights": [float(x) for x in w.ravel()],
                "bias": [float(x) for x in bias],
            })
        return {"cutoff": float(self.cutoff), "layers": layers}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MvnnParams":
        try:
            layers = d["layers"]
            cutoff = float(d["cutoff"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed model document: {exc}") from exc
        ws, bs = [], []
        for k, layer in enumerate(layers):
            rows, cols = int(layer["rows"]), int(layer["cols"])
            w = np.array(layer["weights"], dtype=np.float64)
            if w.size != rows * cols:
                raise DataError(
                    f"layer {k + 1}: expected {rows * cols} weights, got {w.size}"
                )
            ws.append(w.reshape(rows, cols))
            bs.append(np.array(layer["bias"], dtype=np.float64))
        if not ws:
            raise DataError("model has no layers")
        if np.any(bs[-1] != 0.0):
            raise DataError("readout bias must be fixed to 0")
        return cls(tuple(ws), tuple(bs[:-1]), cutoff)


def project(p: MvnnParams, variant: str = "relu-projected") -> MvnnParams:
    """Map parameters onto the constraint set W >= 0, b <= 0.

    relu variants clip (w -> max(0, w), b -> -max(0, -b)); the abs variant
    reflects (w -> |w|, b -> -|b|).
    """
    if variant not in ("relu-projected", "relu", "abs"):
        raise ParameterError(f"unknown projection variant {variant!r}")
    if variant == "abs":
        ws = tuple(np.abs(w) for w in p.weights)
        bs = tuple(-np.abs(b) for b in p.biases)
    else:
        ws = tuple(np.maximum(0.0, w) for w in p.weights)
        bs = tuple(np.minimum(0.0, b) for b in p.biases)
    return MvnnParams(ws, bs, p.cutoff)


def is_projected(p: MvnnParams) -> bool:
    return all(np.all(w >= 0.0) for w in p.weights) and all(
        np.all(b <= 0.0) for b in p.biases
    )


def _as_vector(p: MvnnParams, x) -> np.ndarray:
    v = x.vector if isinstance(x, Bundle) else np.asarray(x, dtype=np.float64)
    if v.shape != (p.num_items,):
        raise DimensionError(
            f"input has shape {v.shape}, network expects ({p.num_items},)"
        )
    return v


def forward(p: MvnnParams, x, activation: str = "brelu") -> float:
    """Evaluate the network at a single bundle."""
    z = _as_vector(p, x)
    for k in range(p.num_layers - 1):
        o = p.weights[k] @ z + p.biases[k]
        z = brelu(o, p.cutoff) if activation == "brelu" else np.maximum(0.0, o)
    return float((p.weights[-1] @ z)[0])


def forward_batch(p: MvnnParams, xs: np.ndarray, activation: str = "brelu") -> np.ndarray:
    """Evaluate the network at a (B, m) matrix of bundles."""
    z = np.asarray(xs, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != p.num_items:
        raise DimensionError(
            f"batch has shape {z.shape}, network expects (*, {p.num_items})"
        )
    for k in range(p.num_layers - 1):
        o = z @ p.weights[k].T + p.biases[k]
        z = brelu(o, p.cutoff) if activation == "brelu" else np.maximum(0.0, o)
    return z @ p.weights[-1].ravel()


def forward_trace(p: MvnnParams, x, activation: str = "brelu"):
    """Forward pass returning (value, [(pre, post)] per hidden layer)."""
    z = _as_vector(p, x)
    trace = []
    for k in range(p.num_layers - 1):
        o = p.weights[k] @ z + p.biases[k]
        z = brelu(o, p.cutoff) if activation == "brelu" else np.maximum(0.0, o)
        trace.append((o, z))
    return float((p.weights[-1] @ z)[0]), trace


def all_bundles_matrix(m: int) -> np.ndarray:
    """All 2^m indicator vectors, row index = bitmask."""
    masks = np.arange(1 << m, dtype=np.int64)
    return ((masks[:, None] >> np.arange(m)) & 1).astype(np.float64)


class MvnnOracle(ValueOracle):
    """ValueOracle wrapper around projected network parameters."""

    def __init__(self, params: MvnnParams):
        if not is_projected(params):
            raise ConstraintViolationError(
                "oracle networks must satisfy the sign constraints"
            )
        self.params = params
        self.num_items = params.num_items
        self.monotone = True

    def evaluate(self, bundle: Bundle) -> float:
        return forward(self.params, bundle)

    def evaluate_many(self, bundles) -> np.ndarray:
        xs = np.stack([b.vector for b in bundles]) if bundles else \
            np.zeros((0, self.num_items))
        return forward_batch(self.params, xs)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for constrained training.

    ``variant`` selects how the sign constraints are enforced; the extra
    value "unconstrained" trains a plain network of the same shape (used as
    the comparison baseline) with the activation given by ``activation``.
    A positive ``soft_monotonicity`` coefficient adds the hinge penalty on
    sign violations instead of hard constraints (meaningful together with
    the unconstrained variant).
    """

    optimizer: str = "adaptive-moment"
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 1
    l2: float = 1e-8
    loss: str = "absolute"
    variant: str = "relu-projected"
    activation: str = "brelu"
    target_scale: float | None = None
    retries: int = 20
    soft_monotonicity: float = 0.0
    cutoff: float = 1.0
    min_train_correlation: float = 0.9

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ParameterError(f"unknown loss {self.loss!r}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch size must be >= 1")
        for name in ("learning_rate", "l2", "soft_monotonicity"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.cutoff <= 0:
            raise ParameterError("cutoff must be > 0")
        if self.retries < 0:
            raise ParameterError("retries must be >= 0")
        if self.target_scale is not None and self.target_scale <= 0:
            raise ParameterError("target scale must be > 0")


def _effective(p: MvnnParams, variant: str) -> MvnnParams:
    """Parameters actually used in the forward pass for a variant."""
    if variant in ("abs", "relu"):
        return project(p, variant)
    return p


def gradient(p: MvnnParams, batch: Sequence[tuple[Bundle, float]],
             cfg: TrainConfig):
    """Gradient of the mean loss (+ L2 + soft-monotonicity penalty) with
    respect to the raw parameters ``p``.

    Returns (weight_grads, bias_grads) with the same shapes as ``p``.
    Subgradient 0 is used at every activation kink and at transform kinks.
    """
    if not batch:
        raise DataError("gradient requires a nonempty batch")
    eff = _effective(p, cfg.variant)
    t = p.cutoff
    xs = np.stack([
        (b.vector if isinstance(b, Bundle) else np.asarray(b, dtype=np.float64))
        for b, _ in batch
    ])
    ys = np.array([v for _, v in batch], dtype=np.float64)
    n_hidden = p.num_layers - 1

    # forward, keeping activations
    zs = [xs]
    pres = []
    z = xs
    for k in range(n_hidden):
        o = z @ eff.weights[k].T + eff.biases[k]
        z = brelu(o, t) if cfg.activation == "brelu" else np.maximum(0.0, o)
        pres.append(o)
        zs.append(z)
    preds = z @ eff.weights[-1].ravel()

    resid = preds - ys
    if cfg.loss == "absolute":
        dpred = np.sign(resid) / len(batch)
    else:
        dpred = 2.0 * resid / len(batch)

    dws = [np.zeros_like(w) for w in p.weights]
    dbs = [np.zeros_like(b) for b in p.biases]
    dws[-1] = (dpred @ zs[-1]).reshape(1, -1)
    dz = np.outer(dpred, eff.weights[-1].ravel())
    for k in range(n_hidden - 1, -1, -1):
        o = pres[k]
        if cfg.activation == "brelu":
            mask = (o > 0.0) & (o < t)
        else:
            mask = o > 0.0
        do = dz * mask
        dws[k] = do.T @ zs[k]
        dbs[k] = do.sum(axis=0)
        dz = do @ eff.weights[k]

    # chain through the weight transform for the differentiating variants
    if cfg.variant == "abs":
        dws = [dw * np.sign(w) for dw, w in zip(dws, p.weights)]
        dbs = [-db * np.sign(b) for db, b in zip(dbs, p.biases)]
    elif cfg.variant == "relu":
        dws = [dw * (w > 0.0) for dw, w in zip(dws, p.weights)]
        dbs = [db * (b < 0.0) for db, b in zip(dbs, p.biases)]

    if cfg.l2 > 0:
        dws = [dw + 2.0 * cfg.l2 * w for dw, w in zip(dws, p.weights)]
        dbs = [db + 2.0 * cfg.l2 * b for db, b in zip(dbs, p.biases)]
    lam = cfg.soft_monotonicity
    if lam > 0:
        dws = [dw - lam * (w < 0.0) for dw, w in zip(dws, p.weights)]
        dbs = [db + lam * (b > 0.0) for db, b in zip(dbs, p.biases)]
    return [np.asarray(d) for d in dws], [np.asarray(d) for d in dbs]


def training_loss(p: MvnnParams, batch, cfg: TrainConfig) -> float:
    """Mean loss plus penalties; the scalar that `gradient` differentiates."""
    eff = _effective(p, cfg.variant)
    xs = np.stack([
        (b.vector if isinstance(b, Bundle) else np.asarray(b, dtype=np.float64))
        for b, _ in batch
    ])
    ys = np.array([v for _, v in batch], dtype=np.float64)
    preds = forward_batch(eff, xs, activation=cfg.activation)
    resid = preds - ys
    loss = np.mean(np.abs(resid)) if cfg.loss == "absolute" else np.mean(resid ** 2)
    if cfg.l2 > 0:
        loss += cfg.l2 * (
            sum(float(np.sum(w ** 2)) for w in p.weights)
            + sum(float(np.sum(b ** 2)) for b in p.biases)
        )
    if cfg.soft_monotonicity > 0:
        loss += cfg.soft_monotonicity * (
            sum(float(np.sum(np.maximum(0.0, -w))) for w in p.weights)
            + sum(float(np.sum(np.maximum(0.0, b))) for b in p.biases)
        )
    return float(loss)


def _init_params(widths: Sequence[int], cutoff: float, rng: np.random.Generator,
                 signed: bool = False) -> MvnnParams:
    # weights U[0, 1/sqrt(fan_in)], biases U[-0.05, 0]; the unconstrained
    # baseline gets the sign-symmetric counterpart
    ws, bs = [], []
    for k in range(len(widths) - 1):
        fan_in = widths[k]
        hi = 1.0 / math.sqrt(fan_in)
        if signed:
            w = rng.uniform(-hi, hi, size=(widths[k + 1], widths[k]))
        else:
            w = rng.uniform(0.0, hi, size=(widths[k + 1], widths[k]))
        ws.append(w)
        if k < len(widths) - 2:
            if signed:
                bs.append(rng.uniform(-0.05, 0.05, size=widths[k + 1]))
            else:
                bs.append(rng.uniform(-0.05, 0.0, size=widths[k + 1]))
    return MvnnParams(tuple(ws), tuple(bs), cutoff)


def _pearson(preds: np.ndarray, ys: np.ndarray) -> float:
    # constant series: call the fit valid iff the residuals are negligible
    sp, sy = np.std(preds), np.std(ys)
    if sp < 1e-12 or sy < 1e-12:
        scale = max(1.0, float(np.max(np.abs(ys))) if ys.size else 1.0)
        return 1.0 if float(np.max(np.abs(preds - ys), initial=0.0)) <= 0.05 * scale else -1.0
    return float(np.corrcoef(preds, ys)[0, 1])


@dataclass(frozen=True)
class TrainResult:
    params: MvnnParams
    attempts: int
    train_correlation: float
    final_loss: float


def train(data: Sequence[tuple[Bundle, float]], widths: Sequence[int],
          cfg: TrainConfig = TrainConfig(), seed: int = 0) -> TrainResult:
    """Train a network of the given layer widths on (bundle, value) pairs.

    ``widths`` lists all layer sizes including the input width and the
    final 1. Targets are scaled into [0, 1] internally; the scale is folded
    back into the readout so the returned network predicts original units.
    Training restarts with a fresh seed-derived initialization while the
    train-set Pearson correlation stays below ``cfg.min_train_correlation``,
    up to ``cfg.retries`` extra attempts.
    """
    if not data:
        raise DataError("training data must be nonempty")
    widths = [int(w) for w in widths]
    if len(widths) < 2 or widths[-1] != 1 or any(w < 1 for w in widths):
        raise DimensionError(f"widths must be positive and end in 1, got {widths}")
    m = data[0][0].m if isinstance(data[0][0], Bundle) else len(data[0][0])
    if widths[0] != m:
        raise DimensionError(f"widths[0]={widths[0]} but data has {m} items")
    values = np.array([v for _, v in data], dtype=np.float64)
    if np.any(values < 0):
        raise DataError("training values must be >= 0")
    scale = cfg.target_scale if cfg.target_scale is not None else float(values.max())
    if scale <= 0:
        scale = 1.0
    scaled = [(b, v / scale) for b, v in data]

    best: TrainResult | None = None
    for attempt in range(cfg.retries + 1):
        rng = np.random.default_rng([abs(int(seed)), attempt])
        result = _fit_once(scaled, widths, cfg, rng, scale, attempt + 1,
                           np.asarray(values))
        if best is None or result.train_correlation > best.train_correlation:
            best = result
        if result.train_correlation >= cfg.min_train_correlation:
            return result
    raise TrainingFailureError(
        f"training diverged on all {cfg.retries + 1} attempts "
        f"(best correlation {best.train_correlation:.4f})",
        best=best,
    )


def _fit_once(scaled_data, widths, cfg, rng, scale, attempt, values) -> TrainResult:
    signed = cfg.variant == "unconstrained"
    p = _init_params(widths, cfg.cutoff, rng, signed=signed)
    n = len(scaled_data)
    state = None
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = [scaled_data[i] for i in order[lo:lo + cfg.batch_size]]
            if cfg.variant == "relu-projected":
                p = project(p, "relu-projected")
            dws, dbs = gradient(p, batch, cfg)
            step += 1
            p, state = _apply_update(p, dws, dbs, lr, cfg, state, step)
    # post-processing projection
    if cfg.variant in ("relu-projected", "relu"):
        p = project(p, "relu-projected")
    elif cfg.variant == "abs":
        p = project(p, "abs")
    # fold the target scale into the readout
    p = MvnnParams(
        (*p.weights[:-1], p.weights[-1] * scale), p.biases, p.cutoff
    )
    xs = np.stack([
        (b.vector if isinstance(b, Bundle) else np.asarray(b, dtype=np.float64))
        for b, _ in scaled_data
    ])
    preds = forward_batch(p, xs, activation=cfg.activation)
    r = _pearson(preds, values)
    if cfg.loss == "absolute":
        final_loss = float(np.mean(np.abs(preds - values)))
    else:
        final_loss = float(np.mean((preds - values) ** 2))
    return TrainResult(params=p, attempts=attempt, train_correlation=r,
                       final_loss=final_loss)


def _apply_update(p, dws, dbs, lr, cfg, state, step):
    if cfg.optimizer == "plain-gradient":
        ws = tuple(w - lr * dw for w, dw in zip(p.weights, dws))
        bs = tuple(b - lr * db for b, db in zip(p.biases, dbs))
        return MvnnParams(ws, bs, p.cutoff), None
    # adaptive-moment (Adam)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    if state is None:
        state = (
            [np.zeros_like(d) for d in dws], [np.zeros_like(d) for d in dws],
            [np.zeros_like(d) for d in dbs], [np.zeros_like(d) for d in dbs],
        )
    mw, vw, mb, vb = state
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    ws, bs = [], []
    for k, (w, dw) in enumerate(zip(p.weights, dws)):
        mw[k] = beta1 * mw[k] + (1 - beta1) * dw
        vw[k] = beta2 * vw[k] + (1 - beta2) * dw ** 2
        ws.append(w - lr * (mw[k] / c1) / (np.sqrt(vw[k] / c2) + eps))
    for k, (b, db) in enumerate(zip(p.biases, dbs)):
        mb[k] = beta1 * mb[k] + (1 - beta1) * db
        vb[k] = beta2 * vb[k] + (1 - beta2) * db ** 2
        bs.append(b - lr * (mb[k] / c1) / (np.sqrt(vb[k] / c2) + eps))
    return MvnnParams(tuple(ws), tuple(bs), p.cutoff), (mw, vw, mb, vb)
