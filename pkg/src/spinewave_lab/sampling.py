"""Latin hypercube designs and named random streams."""

from __future__ import annotations

import numpy as np

_SEED_MASK = (1 << 64) - 1

# stable ids for the independent random streams of one experiment
STREAMS = {"lhs": 1, "ga": 2, "jitter": 3, "fit": 4, "random": 5, "plant": 6}


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Generator for stream ``name`` (optionally per iteration) under ``seed``."""
    return np.random.default_rng([int(seed) & _SEED_MASK, STREAMS[name], *index])


def stream_seed(seed: int, name: str, *index: int) -> int:
    return int(np.random.SeedSequence([int(seed) & _SEED_MASK, STREAMS[name], *index]).generate_state(1)[0])


def lhs_sample(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """Random Latin hypercube of ``n`` points in [0, 1]^dim.

    Each of the ``n`` equal-width bins of every coordinate holds exactly one
    point; positions inside a bin are uniform.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = stream(seed, "lhs")
    perms = np.argsort(rng.random((dim, n)), axis=1).T
    return (perms + rng.random((n, dim))) / n
