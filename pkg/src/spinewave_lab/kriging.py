"""Ordinary Kriging with an anisotropic Gaussian correlation.

The trend is a constant; the process variance and trend are profiled out of
the likelihood, leaving the correlation parameters theta to be found by a
bounded multistart simplex search in log10 space.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import minimize

log = logging.getLogger(__name__)

# log() guard for a vanishing profiled variance (constant responses)
SIGMA2_FLOOR = 1e-300
# score for rejected theta; finite so the simplex bookkeeping never sees inf - inf
_REJECTED = 1e30


class DimensionError(ValueError):
    pass


class DuplicatePointError(ValueError):
    pass


class ConditioningError(np.linalg.LinAlgError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] < 1:
            raise ValueError("training set is empty")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"{X.shape[0]} points but {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("training data must be finite")
        if X.shape[0] > 1:
            d = np.abs(X[:, None, :] - X[None, :, :]).max(axis=2)
            i, j = np.nonzero(np.triu(d <= 1e-12, k=1))
            if i.size:
                raise DuplicatePointError(
                    f"rows {int(i[0])} and {int(j[0])} coincide within 1e-12"
                )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def correlation(theta, xi, xj) -> float:
    """Gaussian correlation prod_k exp(-theta_k (xi_k - xj_k)^2)."""
    theta = np.asarray(theta, dtype=float)
    xi = np.asarray(xi, dtype=float).ravel()
    xj = np.asarray(xj, dtype=float).ravel()
    if not (xi.shape == xj.shape == theta.shape):
        raise DimensionError(
            f"theta {theta.shape}, xi {xi.shape}, xj {xj.shape} must agree"
        )
    if np.any(theta <= 0):
        raise ValueError("theta must be > 0")
    return float(np.exp(-np.sum(theta * (xi - xj) ** 2)))


def correlation_matrix(theta: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cross-correlation between the rows of A (n, d) and B (m, d)."""
    sq = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        diff = A[:, k, None] - B[None, :, k]
        sq += theta[k] * diff * diff
    return np.exp(-sq)


class Likelihood(NamedTuple):
    value: float
    beta_hat: float
    sigma2_hat: float


class _Factor(NamedTuple):
    chol: np.ndarray  # lower-triangular factor of R + nugget I
    logdet: float
    rcond: float


def _factor(R: np.ndarray) -> _Factor:
    L, info = lapack.dpotrf(R, lower=1, clean=1)
    if info != 0:
        raise ConditioningError(
            f"correlation matrix is not positive definite (leading minor {info})"
        )
    anorm = float(np.abs(R).sum(axis=0).max())
    rcond, _ = lapack.dpocon(L, anorm, uplo="L")
    return _Factor(L, 2.0 * float(np.sum(np.log(np.diag(L)))), float(rcond))


def _lower_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    x, info = lapack.dtrtrs(chol, b, lower=1)
    if info != 0:
        raise ConditioningError(f"triangular solve failed (info={info})")
    return x


def _sq_diffs(X: np.ndarray) -> np.ndarray:
    """(n*n, d) squared coordinate differences, reused across theta values."""
    diff = X[:, None, :] - X[None, :, :]
    return (diff * diff).reshape(-1, X.shape[1])


def _profile(chol: np.ndarray, y: np.ndarray):
    sol = _lower_solve(chol, np.column_stack([np.ones_like(y), y]))
    a1, ay = sol[:, 0], sol[:, 1]
    p_rinv_p = float(a1 @ a1)
    beta = float(a1 @ ay) / p_rinv_p
    resid = ay - beta * a1  # L^{-1}(y - beta 1)
    sigma2 = float(resid @ resid) / y.size
    return beta, sigma2, p_rinv_p, resid


def _objective(theta, training: TrainingSet, nugget: float, sq: np.ndarray | None = None):
    if sq is None:
        R = correlation_matrix(theta, training.X, training.X)
    else:
        R = np.exp(-(sq @ theta)).reshape(training.n, training.n)
    R[np.diag_indices_from(R)] += nugget
    fac = _factor(R)
    beta, sigma2, _, _ = _profile(fac.chol, training.y)
    value = 0.5 * (training.n * math.log(max(sigma2, SIGMA2_FLOOR)) + fac.logdet)
    return Likelihood(value, beta, sigma2), fac


def neg_loglik(theta, training: TrainingSet, nugget: float = 0.0) -> Likelihood:
    """Negated concentrated log-likelihood ``[N ln(sigma2) + ln|R|] / 2``.

    Also returns the generalised-least-squares trend and the profiled
    process variance implied by ``theta``.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (training.dim,):
        raise DimensionError(f"theta has {theta.size} entries for dim {training.dim}")
    if np.any(theta <= 0):
        raise ValueError("theta must be > 0")
    return _objective(theta, training, nugget)[0]


class Prediction(NamedTuple):
    mean: np.ndarray | float
    sd: np.ndarray | float


@dataclass(frozen=True, eq=False)
class KrigingModel:
    training: TrainingSet
    theta: np.ndarray
    beta_hat: float
    sigma2_hat: float
    nugget: float
    R_factor: np.ndarray = field(repr=False)
    trend_variance: bool = True
    _one_proj: np.ndarray = field(repr=False, default=None)
    _resid_proj: np.ndarray = field(repr=False, default=None)
    _p_rinv_p: float = field(repr=False, default=0.0)

    @property
    def dim(self) -> int:
        return self.training.dim

    @classmethod
    def from_theta(
        cls,
        training: TrainingSet,
        theta,
        nugget: float = 0.0,
        trend_variance: bool = True,
    ) -> "KrigingModel":
        """Condition the process on ``training`` at fixed correlation parameters."""
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.shape != (training.dim,):
            raise DimensionError(f"theta has {theta.size} entries for dim {training.dim}")
        if np.any(theta <= 0):
            raise ValueError("theta must be > 0")
        R = correlation_matrix(theta, training.X, training.X)
        R[np.diag_indices_from(R)] += nugget
        fac = _factor(R)
        beta, sigma2, p_rinv_p, resid = _profile(fac.chol, training.y)
        one_proj = _lower_solve(fac.chol, np.ones(training.n))
        return cls(
            training=training,
            theta=theta,
            beta_hat=beta,
            sigma2_hat=sigma2,
            nugget=float(nugget),
            R_factor=fac.chol,
            trend_variance=trend_variance,
            _one_proj=one_proj,
            _resid_proj=resid,
            _p_rinv_p=p_rinv_p,
        )

    def predict(self, x) -> Prediction:
        """Mean and standard deviation at one point (d,) or a batch (m, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        P = np.atleast_2d(x)
        if P.shape[1] != self.dim:
            raise DimensionError(f"point has dimension {P.shape[1]}, model has {self.dim}")
        r = correlation_matrix(self.theta, self.training.X, P)  # (n, m)
        w = _lower_solve(self.R_factor, r)
        mean = self.beta_hat + self._resid_proj @ w
        s2 = 1.0 - np.einsum("ij,ij->j", w, w)
        if self.trend_variance:
            s2 = s2 + (1.0 - self._one_proj @ w) ** 2 / self._p_rinv_p
        # below the rounding error of w.w the variance is indistinguishable from 0
        s2[s2 < self.training.n * np.finfo(float).eps] = 0.0
        sd = np.sqrt(self.sigma2_hat * s2)
        if single:
            return Prediction(float(mean[0]), float(sd[0]))
        return Prediction(mean, sd)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.training.n,
            "theta": self.theta.tolist(),
            "beta_hat": self.beta_hat,
            "sigma2_hat": self.sigma2_hat,
            "nugget": self.nugget,
            "trend_variance": self.trend_variance,
            "X": self.training.X.tolist(),
            "y": self.training.y.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KrigingModel":
        training = TrainingSet(np.asarray(data["X"], dtype=float), np.asarray(data["y"], dtype=float))
        if training.dim != data["dim"] or training.n != data["n"]:
            raise DimensionError("snapshot dim/n do not match its X")
        return cls.from_theta(
            training,
            data["theta"],
            nugget=data["nugget"],
            trend_variance=data.get("trend_variance", True),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    @classmethod
    def load(cls, path) -> "KrigingModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(model: KrigingModel, x) -> Prediction:
    return model.predict(x)


@dataclass
class FitConfig:
    log10_theta_bounds: tuple[float, float] = (-3.0, 3.0)
    n_starts: int = 8
    nugget: float = 1e-10
    # theta values whose correlation matrix is worse conditioned are rejected
    max_condition: float = 1e10
    max_fev: int = 400
    # if every start is rejected, the nugget grows by this factor up to max_nugget
    nugget_growth: float = 100.0
    max_nugget: float = 1e-6
    trend_variance: bool = True
    seed: int = 0
    n_workers: int = 1


def _start_points(dim: int, cfg: FitConfig, extra: Sequence[np.ndarray]) -> list[np.ndarray]:
    lo, hi = cfg.log10_theta_bounds
    rng = np.random.default_rng(cfg.seed)
    n_random = max(cfg.n_starts - len(extra), 0)
    starts = [np.clip(np.log10(np.asarray(t, dtype=float)), lo, hi) for t in extra]
    if n_random:
        # stratified starts, one per slice of the log box in every coordinate
        u = (rng.permuted(np.tile(np.arange(n_random), (dim, 1)), axis=1).T
             + rng.random((n_random, dim))) / n_random
        starts += list(lo + (hi - lo) * u)
    return starts


def fit(
    training: TrainingSet,
    config: FitConfig | None = None,
    theta0: Sequence | None = None,
) -> KrigingModel:
    """Maximum-likelihood Kriging fit.

    ``theta0`` (optional) is tried as the first start, ahead of the
    stratified random starts. Parameter sets that fail the Cholesky
    factorisation or exceed ``max_condition`` are rejected; if every start
    is rejected the fit is retried with a larger nugget (logged).
    """
    cfg = config or FitConfig()
    extra = [np.asarray(theta0, dtype=float)] if theta0 is not None else []
    starts = _start_points(training.dim, cfg, extra)
    nugget = cfg.nugget
    while True:
        theta = _search(training, cfg, starts, nugget)
        if theta is not None:
            break
        grown = max(nugget, 1e-12) * cfg.nugget_growth
        if grown > cfg.max_nugget or cfg.nugget_growth <= 1.0:
            raise FitError("every likelihood evaluation failed the conditioning checks")
        log.warning("all correlation matrices ill-conditioned at nugget %.3g; retrying with %.3g", nugget, grown)
        nugget = grown
    return KrigingModel.from_theta(training, theta, nugget=nugget, trend_variance=cfg.trend_variance)


def _search(training: TrainingSet, cfg: FitConfig, starts, nugget: float) -> np.ndarray | None:
    lo, hi = cfg.log10_theta_bounds
    dim = training.dim
    sq = _sq_diffs(training.X)

    def score(log_theta):
        theta = 10.0 ** np.clip(log_theta, lo, hi)
        try:
            lik, fac = _objective(theta, training, nugget, sq)
        except np.linalg.LinAlgError:
            return _REJECTED
        if fac.rcond * cfg.max_condition < 1.0:
            return _REJECTED
        return lik.value

    def search(x0):
        f0 = score(x0)
        if training.n == 1:
            return x0, f0
        res = minimize(
            score,
            x0,
            method="Nelder-Mead",
            bounds=[(lo, hi)] * dim,
            options={"maxfev": cfg.max_fev, "xatol": 1e-4, "fatol": 1e-10},
        )
        if res.fun <= f0:
            return np.asarray(res.x), float(res.fun)
        return x0, f0

    if cfg.n_workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
            results = list(pool.map(search, starts))
    else:
        results = [search(s) for s in starts]

    finite = [(f, i) for i, (_, f) in enumerate(results) if f < _REJECTED]
    if not finite:
        return None
    _, best = min(finite)
    return 10.0 ** np.clip(results[best][0], lo, hi)
