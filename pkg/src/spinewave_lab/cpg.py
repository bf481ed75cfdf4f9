"""Coupled Hopf-oscillator central pattern generator.

Each oscillator i carries a state (u_i, v_i). The radial term drives the
point (u_i, v_i - b_i) onto a circle of radius sqrt(eps_i) that turns at
angular rate omega; neighbouring oscillators are chained through rotation
couplings of strength h and j with phase bias theta.

Network states are float arrays of shape (N, 2) with columns (u, v).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

__all__ = [
    "CpgParams",
    "DimensionError",
    "DivergenceError",
    "GaitMetrics",
    "InsufficientDataError",
    "Trajectory",
    "derivative",
    "extract_metrics",
    "limit_cycle_state",
    "simulate",
    "upcrossing_times",
]

COUPLING_FORMS = ("consistent", "printed")


class DimensionError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite oscillator state at step {step} (t={time:.6g} s)")
        self.step = step
        self.time = time


class InsufficientDataError(ValueError):
    pass


def _as_vector(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise DimensionError(f"{name} has shape {arr.shape}, expected ({n},)")
    return arr


@dataclass(frozen=True, eq=False)
class CpgParams:
    """Parameters of the oscillator chain.

    ``epsilon`` and ``b`` are per-oscillator; a scalar is broadcast over
    ``n_oscillators``. The first ``n_oscillators - n_pectoral`` entries form
    the body chain (head first); the optional pectoral channels hang off the
    head oscillator and do not feed back into the body.

    ``coupling="consistent"`` (default) uses ``+j (v_{i-1} - b) sin(theta)``
    in the u-equation so that a chain settles into a travelling wave in
    which each oscillator lags its predecessor by ``theta``.
    ``coupling="printed"`` keeps the literal minus sign, whose two neighbour
    terms pull in opposite directions and lock the chain near zero lag.
    """

    omega: float
    epsilon: np.ndarray
    b: np.ndarray = 0.0
    k: float = 1.0
    theta: float = math.pi / 4
    h: float = 0.5
    j: float = 0.5
    n_pectoral: int = 0
    coupling: str = "consistent"
    n_oscillators: int = field(init=False)

    def __post_init__(self):
        eps = np.atleast_1d(np.asarray(self.epsilon, dtype=float))
        n = eps.shape[0]
        b = _as_vector(self.b, n, "b")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n_oscillators", n)
        if eps.ndim != 1 or n < 1:
            raise DimensionError("epsilon must be a non-empty vector")
        if not (self.omega > 0):
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not (self.k > 0):
            raise ValueError(f"k must be > 0, got {self.k}")
        if np.any(eps < 0):
            raise ValueError("epsilon must be >= 0 elementwise")
        if self.n_pectoral not in (0, 2) or self.n_pectoral >= n:
            raise ValueError("n_pectoral must be 0 or 2 and leave at least one body oscillator")
        if self.coupling not in COUPLING_FORMS:
            raise ValueError(f"coupling must be one of {COUPLING_FORMS}")

    @property
    def n_body(self) -> int:
        return self.n_oscillators - self.n_pectoral

    @classmethod
    def preset(cls, n_segments: int = 5, pectoral: bool = False, **overrides) -> "CpgParams":
        """Chain preset for the 1-, 3- or 5-segment bodies.

        Defaults: 0.7 Hz, unit amplitude, h = j = 0.5, k = 1, theta = pi/4.
        """
        if n_segments not in (1, 3, 5):
            raise ValueError("n_segments must be 1, 3 or 5")
        n = n_segments + (2 if pectoral else 0)
        kwargs = dict(
            omega=2 * math.pi * 0.7,
            epsilon=np.ones(n),
            b=np.zeros(n),
            n_pectoral=2 if pectoral else 0,
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_values(self, **changes) -> "CpgParams":
        return replace(self, **changes)

    def neighbours(self) -> tuple[np.ndarray, np.ndarray]:
        """Index of the upstream (u-coupled) and downstream (v-coupled) neighbour, -1 if none."""
        n, nb = self.n_oscillators, self.n_body
        prev = np.full(n, -1, dtype=np.int64)
        nxt = np.full(n, -1, dtype=np.int64)
        prev[1:nb] = np.arange(nb - 1)
        nxt[: nb - 1] = np.arange(1, nb)
        prev[nb:] = 0
        return prev, nxt


def _check_state(state, params: CpgParams) -> np.ndarray:
    s = np.asarray(state, dtype=float)
    if s.shape != (params.n_oscillators, 2):
        raise DimensionError(
            f"state has shape {s.shape}, expected ({params.n_oscillators}, 2)"
        )
    return s


def derivative(state, params: CpgParams) -> np.ndarray:
    """Time derivative of the network state, shape (N, 2)."""
    s = _check_state(state, params)
    u, w = s[:, 0], s[:, 1] - params.b
    k2 = params.k * params.k
    radial = k2 * (params.epsilon - (u * u + w * w))
    du = radial * u - params.omega * w
    dv = radial * w + params.omega * u

    prev, nxt = params.neighbours()
    c, sn = math.cos(params.theta), math.sin(params.theta)
    sign = 1.0 if params.coupling == "consistent" else -1.0
    has_prev = prev >= 0
    p = prev[has_prev]
    du[has_prev] += params.h * u[p] * c + sign * params.j * w[p] * sn
    has_next = nxt >= 0
    q = nxt[has_next]
    dv[has_next] += params.h * u[q] * sn + params.j * w[q] * c
    return np.column_stack([du, dv])


@njit(cache=True)
def _deriv_kernel(u, v, out_u, out_v, omega, eps, b, k2, hc, js, hs, jc, prev, nxt):
    n = u.shape[0]
    for i in range(n):
        wi = v[i] - b[i]
        radial = k2 * (eps[i] - (u[i] * u[i] + wi * wi))
        du = radial * u[i] - omega * wi
        dv = radial * wi + omega * u[i]
        p = prev[i]
        if p >= 0:
            du += hc * u[p] + js * (v[p] - b[p])
        q = nxt[i]
        if q >= 0:
            dv += hs * u[q] + jc * (v[q] - b[q])
        out_u[i] = du
        out_v[i] = dv


@njit(cache=True)
def _rk4_kernel(u0, v0, n_steps, dt, omega, eps, b, k2, hc, js, hs, jc, prev, nxt, U, V):
    """Classical RK4; writes states into U, V rows 1..n_steps. Returns failing step or -1."""
    n = u0.shape[0]
    u = u0.copy()
    v = v0.copy()
    k1u = np.empty(n); k1v = np.empty(n)
    k2u = np.empty(n); k2v = np.empty(n)
    k3u = np.empty(n); k3v = np.empty(n)
    k4u = np.empty(n); k4v = np.empty(n)
    tu = np.empty(n); tv = np.empty(n)
    half = 0.5 * dt
    for step in range(1, n_steps + 1):
        _deriv_kernel(u, v, k1u, k1v, omega, eps, b, k2, hc, js, hs, jc, prev, nxt)
        for i in range(n):
            tu[i] = u[i] + half * k1u[i]
            tv[i] = v[i] + half * k1v[i]
        _deriv_kernel(tu, tv, k2u, k2v, omega, eps, b, k2, hc, js, hs, jc, prev, nxt)
        for i in range(n):
            tu[i] = u[i] + half * k2u[i]
            tv[i] = v[i] + half * k2v[i]
        _deriv_kernel(tu, tv, k3u, k3v, omega, eps, b, k2, hc, js, hs, jc, prev, nxt)
        for i in range(n):
            tu[i] = u[i] + dt * k3u[i]
            tv[i] = v[i] + dt * k3v[i]
        _deriv_kernel(tu, tv, k4u, k4v, omega, eps, b, k2, hc, js, hs, jc, prev, nxt)
        ok = True
        for i in range(n):
            u[i] += dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i])
            v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            if not (math.isfinite(u[i]) and math.isfinite(v[i])):
                ok = False
            U[step, i] = u[i]
            V[step, i] = v[i]
        if not ok:
            return step
    return -1


def _kernel_args(params: CpgParams):
    c, sn = math.cos(params.theta), math.sin(params.theta)
    sign = 1.0 if params.coupling == "consistent" else -1.0
    prev, nxt = params.neighbours()
    return (
        float(params.omega),
        params.epsilon,
        params.b,
        float(params.k) ** 2,
        params.h * c,
        sign * params.j * sn,
        params.h * sn,
        params.j * c,
        prev,
        nxt,
    )


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    angle: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def n_oscillators(self) -> int:
        return self.u.shape[1]

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = self.n_oscillators
        header = ["t"]
        for i in range(1, n + 1):
            header += [f"u_{i}", f"v_{i}"]
        header += [f"angle_{i}" for i in range(1, n + 1)]
        inter = np.empty((self.t.size, 2 * n))
        inter[:, 0::2] = self.u
        inter[:, 1::2] = self.v
        rows = np.column_stack([self.t, inter, self.angle])
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([f"{x:.9g}" for x in row])
        return path


def limit_cycle_state(params: CpgParams) -> np.ndarray:
    """Point on each oscillator's nominal circle, phased as a travelling wave."""
    n = params.n_oscillators
    r = np.sqrt(params.epsilon)
    phase = -params.theta * np.arange(n, dtype=float)
    phase[params.n_body:] = -params.theta
    return np.column_stack([r * np.cos(phase), params.b + r * np.sin(phase)])


def simulate(
    params: CpgParams,
    duration: float,
    dt: float = 1e-3,
    initial=None,
    schedule: Sequence[tuple[float, CpgParams]] = (),
    output: str = "v",
) -> Trajectory:
    """Integrate the chain with fixed-step RK4, sampling every step.

    ``schedule`` holds ``(t_switch, params)`` pairs; each new parameter set
    takes effect at the first step boundary at or after ``t_switch``.
    ``output`` selects the state used as joint command angle ("v" carries
    the offset b; "u" is centred on zero).
    """
    if not (dt > 0):
        raise ValueError("dt must be > 0")
    if not (duration >= dt):
        raise ValueError("duration must be >= dt")
    if output not in ("u", "v"):
        raise ValueError("output must be 'u' or 'v'")
    n_steps = int(round(duration / dt))
    if initial is None:
        initial = np.column_stack(
            [np.full(params.n_oscillators, 0.1), params.b.copy()]
        )
    s0 = _check_state(initial, params)

    segments = [(0, params)]
    for t_switch, p in sorted(schedule, key=lambda item: item[0]):
        if p.n_oscillators != params.n_oscillators:
            raise DimensionError("scheduled parameters change the oscillator count")
        segments.append((min(n_steps, int(math.ceil(t_switch / dt - 1e-9))), p))

    U = np.empty((n_steps + 1, params.n_oscillators))
    V = np.empty_like(U)
    U[0], V[0] = s0[:, 0], s0[:, 1]
    for idx, (start, p) in enumerate(segments):
        stop = segments[idx + 1][0] if idx + 1 < len(segments) else n_steps
        if stop <= start:
            continue
        fail = _rk4_kernel(
            U[start].copy(), V[start].copy(), stop - start, dt, *_kernel_args(p),
            U[start:stop + 1], V[start:stop + 1],
        )
        if fail >= 0:
            step = start + fail
            raise DivergenceError(step, step * dt)
    t = np.arange(n_steps + 1) * dt
    angle = (V if output == "v" else U).copy()
    return Trajectory(t=t, u=U, v=V, angle=angle)


@dataclass
class GaitMetrics:
    amplitude: np.ndarray
    frequency: float
    phase_lag: np.ndarray
    offset: np.ndarray


def upcrossing_times(t: np.ndarray, x: np.ndarray, level: float = 0.0) -> np.ndarray:
    """Linearly interpolated times at which ``x`` crosses ``level`` upwards."""
    y = np.asarray(x, dtype=float) - level
    idx = np.nonzero((y[:-1] < 0.0) & (y[1:] >= 0.0))[0]
    frac = -y[idx] / (y[idx + 1] - y[idx])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def _lag_samples(a: np.ndarray, b: np.ndarray, max_lag: int) -> float:
    """Shift tau (samples) maximising the circular correlation sum a(t) b(t + tau).

    Inputs should span a whole number of cycles; the peak is refined with a
    parabola through its neighbours.
    """
    a = a - a.mean()
    b = b - b.mean()
    n = a.size
    corr = np.fft.irfft(np.fft.rfft(b) * np.conj(np.fft.rfft(a)), n)
    lags = np.arange(-max_lag, max_lag + 1)
    vals = corr[lags % n]
    m = int(np.argmax(vals))
    if 0 < m < vals.size - 1:
        c0, c1, c2 = vals[m - 1], vals[m], vals[m + 1]
        denom = c0 - 2 * c1 + c2
        shift = 0.5 * (c0 - c2) / denom if denom != 0 else 0.0
        return lags[m] + shift
    return float(lags[m])


def extract_metrics(trajectory: Trajectory, settle_fraction: float = 0.5) -> GaitMetrics:
    """Steady-state amplitude, frequency, adjacent phase lags and offsets.

    Statistics are taken over the whole cycles between the first and last
    upward zero crossing after the settle window, so means carry no
    partial-cycle bias.
    """
    if not (0.0 <= settle_fraction < 1.0):
        raise ValueError("settle_fraction must lie in [0, 1)")
    t = trajectory.t
    t0 = t[0] + settle_fraction * (t[-1] - t[0])
    win = t >= t0
    tw, u, v = t[win], trajectory.u[win], trajectory.v[win]

    amplitude = 0.5 * (u.max(axis=0) - u.min(axis=0))
    ref = int(np.argmax(amplitude))
    crossings = upcrossing_times(tw, u[:, ref])
    if crossings.size < 2:
        raise InsufficientDataError(
            f"{crossings.size} upward zero crossing(s) after the settle window; need >= 2"
        )
    period = float(np.mean(np.diff(crossings)))
    frequency = 1.0 / period

    cyc = (tw >= crossings[0]) & (tw <= crossings[-1])
    amplitude = 0.5 * (u[cyc].max(axis=0) - u[cyc].min(axis=0))
    offset = v[cyc].mean(axis=0)

    dt = float(tw[1] - tw[0])
    max_lag = int(round(0.5 * period / dt))
    lags = [
        2 * math.pi * frequency * dt * _lag_samples(u[cyc, i], u[cyc, i + 1], max_lag)
        for i in range(u.shape[1] - 1)
    ]
    return GaitMetrics(
        amplitude=amplitude,
        frequency=frequency,
        phase_lag=np.asarray(lags),
        offset=offset,
    )
