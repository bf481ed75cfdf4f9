"""Efficient global optimisation: Kriging surrogate + expected improvement.

The loop runs in the unit hypercube; physical bounds are applied only when
the objective is called. Maximisation problems are negated internally so the
improvement is always measured below the incumbent minimum.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import erfcx, ndtr

from .ga import GAConfig, ga_run
from .kriging import FitConfig, KrigingModel, TrainingSet, fit
from .sampling import lhs_sample, stream, stream_seed

log = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class EgoError(RuntimeError):
    """Unrecoverable failure inside the optimisation loop."""


class ReplayMismatch(EgoError):
    pass


@dataclass
class EgoConfig:
    dim: int
    bounds: Sequence[tuple[float, float]]
    n_init: int | None = None  # None -> 10 * dim
    n_infill: int | None = None  # None -> 5 * dim
    ga: GAConfig = field(default_factory=GAConfig)
    kriging: FitConfig = field(default_factory=FitConfig)
    # random starts added to the warm start when refitting after an infill
    refit_starts: int = 2
    seed: int = 0
    minimize: bool = True
    surface_dims: tuple[int, int] = (0, 1)
    surface_resolution: int = 50
    duplicate_tol: float = 1e-9
    jitter_sd: float = 1e-6
    max_failures_per_iter: int = 5
    # uniform candidates tried after the ranked GA ones have all failed
    random_fallbacks: int = 20
    # EI is zeroed within this sup-norm radius (unit box) of failed points
    failure_radius: float = 0.02

    def __post_init__(self):
        self.bounds = [tuple(map(float, b)) for b in self.bounds]
        if self.n_init is None:
            self.n_init = 10 * self.dim
        if self.n_infill is None:
            self.n_infill = 5 * self.dim
        self.validate()

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if len(self.bounds) != self.dim:
            raise ValueError(f"{len(self.bounds)} bounds for dim {self.dim}")
        for k, (lo, hi) in enumerate(self.bounds):
            if not lo < hi:
                raise ValueError(f"bounds[{k}]: lo must be < hi")
        if self.n_init < self.dim + 1:
            raise ValueError("n_init must be >= dim + 1")
        if self.max_failures_per_iter < 1 or self.random_fallbacks < 0:
            raise ValueError("max_failures_per_iter must be >= 1 and random_fallbacks >= 0")
        if self.n_infill < 0:
            raise ValueError("n_infill must be >= 0")
        if not 0 <= self.failure_radius < 0.5:
            raise ValueError("failure_radius must be in [0, 0.5)")
        self.ga.validate()

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def to_physical(self, z: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(z) * (self.upper - self.lower)

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.lower) / (self.upper - self.lower)


# --------------------------------------------------------------------------
# acquisition


def _ei_kernel(z: np.ndarray) -> np.ndarray:
    """phi(z) + z Phi(z), the expected improvement of a unit-sd outcome."""
    out = np.empty_like(z)
    body = z > -5.0
    zb = z[body]
    out[body] = _INV_SQRT_2PI * np.exp(-0.5 * zb * zb) + zb * ndtr(zb)
    # lower tail: factor out exp(-z^2/2) so the two terms cancel in O(1) numbers
    zt = z[~body]
    out[~body] = np.exp(-0.5 * zt * zt) * (_INV_SQRT_2PI + 0.5 * zt * erfcx(-zt / math.sqrt(2.0)))
    return out


def ei_from_moments(mean, sd, f_min: float) -> np.ndarray:
    """Expected improvement below ``f_min`` of a normal(mean, sd) outcome; 0 where sd == 0."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    mean, sd = np.broadcast_arrays(mean, sd)
    out = np.zeros(mean.shape)
    pos = sd > 0
    gap = f_min - mean[pos]
    with np.errstate(over="ignore"):
        z = gap / sd[pos]
    # a subnormal sd can overflow z; the limit there is max(gap, 0)
    val = np.maximum(gap, 0.0)
    ok = np.isfinite(z)
    with np.errstate(over="ignore", under="ignore"):
        # huge |z| only drives exp(-z^2/2) to zero, which is the right limit
        val[ok] = sd[pos][ok] * _ei_kernel(z[ok])
    out[pos] = np.maximum(val, 0.0)
    return out


def expected_improvement(model: KrigingModel, x, f_min: float):
    """EI of the Kriging prediction at one point (float) or a batch (array)."""
    pred = model.predict(x)
    ei = ei_from_moments(pred.mean, pred.sd, f_min)
    return float(ei) if np.ndim(x) == 1 else ei


# --------------------------------------------------------------------------
# evaluation database


@dataclass
class EvalRecord:
    x: list[float]
    y: float | None
    tag: str  # init | infill | failure
    iteration: int
    metrics: dict[str, Any] | None = None

    def to_json(self) -> str:
        data = {"x": self.x, "y": self.y, "tag": self.tag, "iteration": self.iteration}
        if self.metrics is not None:
            data["metrics"] = self.metrics
        return json.dumps(data, allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "EvalRecord":
        d = json.loads(line)
        return cls(
            x=[float(v) for v in d["x"]],
            y=None if d["y"] is None else float(d["y"]),
            tag=d["tag"],
            iteration=int(d["iteration"]),
            metrics=d.get("metrics"),
        )


class EvaluationDatabase:
    """Append-only list of evaluations, mirrored to a JSON-lines file if given."""

    def __init__(self, path: str | Path | None = None, records: Sequence[EvalRecord] = ()):
        self.path = Path(path) if path is not None else None
        self.records: list[EvalRecord] = list(records)

    @classmethod
    def load(cls, path: str | Path) -> "EvaluationDatabase":
        path = Path(path)
        records = []
        if path.exists():
            with path.open() as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        records.append(EvalRecord.from_json(line))
        return cls(path, records)

    def append(self, record: EvalRecord) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(record.to_json() + "\n")
                fh.flush()

    def successful(self) -> list[EvalRecord]:
        return [r for r in self.records if r.tag != "failure"]

    def __len__(self) -> int:
        return len(self.successful())


def _clean_metrics(metrics):
    if metrics is None:
        return None
    out = {}
    for key, val in metrics.items():
        val = np.asarray(val).tolist() if isinstance(val, np.ndarray) else val
        if isinstance(val, (float, np.floating)):
            val = float(val) if math.isfinite(val) else None
        out[key] = val
    return out


class _Evaluator:
    """Calls the objective, replaying any records already in the database."""

    def __init__(self, objective, db: EvaluationDatabase):
        self.objective = objective
        self.db = db
        self.cursor = 0
        self.replayed = len(db.records)

    def __call__(self, x: np.ndarray, tag: str, iteration: int) -> float:
        xs = [float(v) for v in x]
        if self.cursor < self.replayed:
            rec = self.db.records[self.cursor]
            self.cursor += 1
            if rec.x != xs or rec.iteration != iteration or rec.tag not in (tag, "failure"):
                raise ReplayMismatch(
                    f"database record {self.cursor - 1} ({rec.tag}, iteration {rec.iteration}) "
                    f"does not match the replayed run ({tag}, iteration {iteration})"
                )
            return math.nan if rec.y is None else rec.y
        out = self.objective(np.array(xs))
        metrics = None
        if isinstance(out, tuple):
            out, metrics = out
        y = float(out)
        ok = math.isfinite(y)
        self.db.append(
            EvalRecord(xs, y if ok else None, tag if ok else "failure", iteration, _clean_metrics(metrics))
        )
        self.cursor += 1
        return y


# --------------------------------------------------------------------------
# loop


@dataclass
class HistoryRow:
    iteration: int
    tag: str
    x: np.ndarray
    y: float
    best_so_far: float
    ei: float | None = None
    surface_delta: float | None = None


@dataclass
class EgoResult:
    best_x: np.ndarray
    best_y: float
    history: list[HistoryRow]
    database: EvaluationDatabase
    model: KrigingModel
    n_evals: int
    wall_time_s: float
    config: EgoConfig

    def surface_deltas(self) -> np.ndarray:
        return np.array([h.surface_delta for h in self.history if h.tag == "infill"])

    def write_history(self, path) -> Path:
        path = Path(path)
        d = self.config.dim
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "tag", *[f"x_{i}" for i in range(1, d + 1)],
                        "y", "best_so_far", "ei", "surface_delta"])
            for h in self.history:
                w.writerow([h.iteration, h.tag, *map(repr, map(float, h.x)), repr(h.y),
                            repr(h.best_so_far),
                            "" if h.ei is None else repr(h.ei),
                            "" if h.surface_delta is None else repr(h.surface_delta)])
        return path

    def result_dict(self) -> dict:
        return {
            "best_x": [float(v) for v in self.best_x],
            "best_y": float(self.best_y),
            "n_evals": self.n_evals,
            "wall_time_s": self.wall_time_s,
        }


def surface_grid(dim: int, dims: tuple[int, int] = (0, 1), resolution: int = 50,
                 fixed: np.ndarray | float = 0.5) -> np.ndarray:
    """Normalised points of a resolution x resolution slice through dims (i, j).

    For a 1-D design the slice degenerates to resolution**2 points on a line.
    """
    g = np.linspace(0.0, 1.0, resolution)
    if dim == 1:
        return np.linspace(0.0, 1.0, resolution * resolution)[:, None]
    i, j = dims
    base = np.broadcast_to(np.asarray(fixed, dtype=float), (dim,))
    P = np.tile(base, (resolution * resolution, 1))
    gi, gj = np.meshgrid(g, g, indexing="ij")
    P[:, i] = gi.ravel()
    P[:, j] = gj.ravel()
    return P


def run_ego(
    objective: Callable[[np.ndarray], Any],
    config: EgoConfig,
    database: EvaluationDatabase | None = None,
) -> EgoResult:
    """Run the full loop: LHS design, fit, then ``n_infill`` EI-driven evaluations.

    ``objective`` receives a physical design vector and returns a float, or
    ``(float, metrics_dict)``. Non-finite values are logged as failures and
    the next-ranked GA candidate is tried instead. If ``database`` already
    holds records (a resumed run) they are replayed in order instead of
    re-calling the objective, which makes the resumed run identical to an
    uninterrupted one.
    """
    cfg = config
    t_start = time.perf_counter()
    db = database if database is not None else EvaluationDatabase()
    evaluate = _Evaluator(objective, db)
    sign = 1.0 if cfg.minimize else -1.0
    better = min if cfg.minimize else max

    Z: list[np.ndarray] = []
    Y: list[float] = []
    history: list[HistoryRow] = []
    failed: list[np.ndarray] = []

    def near_failure(X, radius):
        if not failed or radius <= 0:
            return np.zeros(len(X), dtype=bool)
        F = np.array(failed)
        return np.abs(X[:, None, :] - F[None]).max(axis=2).min(axis=1) < radius

    def acquisition(X, f_min):
        ei = ei_from_moments(*model.predict(X), f_min)
        return np.where(near_failure(X, cfg.failure_radius), 0.0, ei)

    def record(z, y, tag, it, ei=None, delta=None):
        Z.append(z)
        Y.append(y)
        history.append(HistoryRow(it, tag, cfg.to_physical(z), y, better(Y), ei, delta))

    for z in lhs_sample(cfg.n_init, cfg.dim, cfg.seed):
        y = evaluate(cfg.to_physical(z), "init", 0)
        if math.isfinite(y):
            record(z, y, "init", 0)
        else:
            failed.append(z)
            log.warning("initial design point %s failed; excluded from the surrogate", z)
    if len(Y) < 2:
        raise EgoError("fewer than two successful initial evaluations")

    def refit(it, theta0=None):
        kcfg = replace(cfg.kriging, seed=stream_seed(cfg.seed, "fit", it))
        if theta0 is not None:
            kcfg = replace(kcfg, n_starts=1 + cfg.refit_starts)
        ts = TrainingSet(np.array(Z), sign * np.array(Y))
        return fit(ts, kcfg, theta0=theta0)

    model = refit(0)
    grid = surface_grid(cfg.dim, cfg.surface_dims, cfg.surface_resolution)
    surface = model.predict(grid).mean

    for it in range(1, cfg.n_infill + 1):
        f_min = float(np.min(sign * np.array(Y)))
        ga = ga_run(
            lambda X: acquisition(X, f_min),
            cfg.dim, cfg.ga, stream(cfg.seed, "ga", it),
        )
        jitter = stream(cfg.seed, "jitter", it)
        Zarr = np.array(Z)
        tried: list[np.ndarray] = []
        y = math.nan
        # ranked GA candidates first, then uniform fallbacks
        ranked = [z for z in ga.population if not near_failure(z[None], 1e-12)[0]]
        extra = stream(cfg.seed, "random", it).random((cfg.random_fallbacks, cfg.dim))
        candidates = ranked[: cfg.max_failures_per_iter] + list(extra)
        scores = acquisition(np.array(candidates), f_min) if candidates else []
        for rank, (z, ei) in enumerate(zip(candidates, scores)):
            if near_failure(z[None], max(cfg.failure_radius, 1e-12))[0]:
                continue
            z = z.copy()
            if np.min(np.max(np.abs(Zarr - z), axis=1)) <= cfg.duplicate_tol:
                # step toward the interior so clamping cannot undo the jitter
                step = np.abs(jitter.normal(0.0, cfg.jitter_sd, cfg.dim))
                z = np.clip(z + np.where(z > 0.5, -step, step), 0.0, 1.0)
                log.info("iteration %d: infill duplicates a database point; jittered", it)
            tried.append(z)
            y = evaluate(cfg.to_physical(z), "infill", it)
            if math.isfinite(y):
                break
            failed.append(z)
            log.warning("iteration %d: objective non-finite at rank-%d candidate; trying next", it, rank)
        if not math.isfinite(y):
            raise EgoError(f"iteration {it}: no finite objective value among the top candidates")
        theta_prev = model.theta
        Z_new = z
        record_args = (Z_new, y, "infill", it, float(ei))
        Z.append(Z_new)
        Y.append(y)
        model = refit(it, theta0=theta_prev)
        Z.pop()
        Y.pop()
        new_surface = model.predict(grid).mean
        delta = float(np.max(np.abs(new_surface - surface)))
        surface = new_surface
        record(*record_args, delta)

    best = int(np.argmin(sign * np.array(Y)))
    return EgoResult(
        best_x=cfg.to_physical(Z[best]),
        best_y=Y[best],
        history=history,
        database=db,
        model=model,
        n_evals=len(Y),
        wall_time_s=time.perf_counter() - t_start,
        config=cfg,
    )


def random_search(objective: Callable[[np.ndarray], Any], config: EgoConfig,
                  n: int | None = None, seed: int | None = None) -> tuple[np.ndarray, float]:
    """Best of ``n`` uniform random evaluations (default n_init + n_infill)."""
    n = n if n is not None else config.n_init + config.n_infill
    rng = stream(config.seed if seed is None else seed, "random")
    Z = rng.random((n, config.dim))
    best_x, best_y = None, None
    for z in Z:
        x = config.to_physical(z)
        out = objective(x)
        y = float(out[0] if isinstance(out, tuple) else out)
        if not math.isfinite(y):
            continue
        if best_y is None or (y < best_y if config.minimize else y > best_y):
            best_x, best_y = x, y
    return best_x, best_y
