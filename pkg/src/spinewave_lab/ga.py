"""Real-coded genetic algorithm on the unit hypercube."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np


@dataclass
class GAConfig:
    pop_size: int = 50
    generations: int = 100
    p_c: float = 0.9
    p_m: float | None = None  # None -> 1 / dim
    blend_alpha: float = 0.5
    tournament_size: int = 2
    mutation_sd: float = 0.1

    def validate(self) -> None:
        if self.pop_size < 4 or self.pop_size % 2:
            raise ValueError("pop_size must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0.0 <= self.p_c <= 1.0:
            raise ValueError("p_c must lie in [0, 1]")
        if self.p_m is not None and not 0.0 <= self.p_m <= 1.0:
            raise ValueError("p_m must lie in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")


class GAResult(NamedTuple):
    x: np.ndarray
    value: float
    population: np.ndarray  # final generation, best first
    fitness: np.ndarray


def ga_run(
    objective: Callable[[np.ndarray], np.ndarray],
    dim: int,
    config: GAConfig | None = None,
    seed: int | np.random.Generator = 0,
) -> GAResult:
    """Maximise a batch objective ``f(X: (n, dim)) -> (n,)`` over [0, 1]^dim.

    Tournament selection, blend (BLX-alpha) crossover applied to each parent
    pair with probability ``p_c``, per-gene Gaussian mutation with
    probability ``p_m``, and a single elite carried into every generation.
    Offspring are clamped to the unit box before evaluation.
    """
    cfg = config or GAConfig()
    cfg.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p_m = cfg.p_m if cfg.p_m is not None else 1.0 / dim
    P, a = cfg.pop_size, cfg.blend_alpha

    def evaluate(X):
        f = np.asarray(objective(X), dtype=float).reshape(-1)
        return np.where(np.isnan(f), -np.inf, f)

    pop = rng.random((P, dim))
    fit = evaluate(pop)
    for _ in range(cfg.generations):
        elite = int(np.argmax(fit))
        contenders = rng.integers(0, P, size=(P, cfg.tournament_size))
        winners = contenders[np.arange(P), np.argmax(fit[contenders], axis=1)]
        parents = pop[winners]

        p1, p2 = parents[0::2], parents[1::2]
        lo, hi = np.minimum(p1, p2), np.maximum(p1, p2)
        span = hi - lo
        c1 = lo - a * span + rng.random(p1.shape) * (1 + 2 * a) * span
        c2 = lo - a * span + rng.random(p1.shape) * (1 + 2 * a) * span
        cross = rng.random(P // 2) < cfg.p_c
        c1 = np.where(cross[:, None], c1, p1)
        c2 = np.where(cross[:, None], c2, p2)
        children = np.empty_like(pop)
        children[0::2], children[1::2] = c1, c2

        mutate = rng.random(children.shape) < p_m
        children += mutate * rng.normal(0.0, cfg.mutation_sd, children.shape)
        np.clip(children, 0.0, 1.0, out=children)

        children[0] = pop[elite]
        child_fit = evaluate(children[1:])
        fit = np.concatenate([[fit[elite]], child_fit])
        pop = children

    order = np.argsort(-fit, kind="stable")
    pop, fit = pop[order], fit[order]
    return GAResult(pop[0].copy(), float(fit[0]), pop, fit)


def ga_maximize(objective, dim: int, config: GAConfig | None = None, seed=0) -> tuple[np.ndarray, float]:
    res = ga_run(objective, dim, config, seed)
    return res.x, res.value
