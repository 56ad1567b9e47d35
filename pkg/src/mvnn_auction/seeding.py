"""Named deterministic random substreams.

All randomness in the package flows from one master seed through named
substreams so that components (domain draws, initial queries, training
initializations, fallbacks, benchmarks) can be varied independently
without perturbing each other.
"""

from __future__ import annotations

import numpy as np

_STREAM_CODES = {
    "domain": 1,
    "init": 2,
    "train": 3,
    "queries": 4,
    "fallback": 5,
    "solver": 6,
    "bench": 7,
    "relu": 8,
    "table": 9,
    "holdout": 10,
}


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    if name not in _STREAM_CODES:
        raise KeyError(f"unknown random substream {name!r}")
    entropy = [abs(int(seed)), _STREAM_CODES[name], *[int(i) for i in indices]]
    return np.random.default_rng(entropy)


def combined_seed(seed: int, *indices: int) -> int:
    """Fold indices into a single non-negative integer seed."""
    out = abs(int(seed))
    for i in indices:
        out = (out * 1_000_003 + int(i) + 1) % (1 << 62)
    return out
