"""Quasi-static model of the magnetic-spring ribcage joints.

Each passive joint carries opposing magnet pairs on both sides of its axis.
Bending by alpha closes the gap on the inner side and opens it on the outer
side; the imbalance of the two repulsions is a restoring torque.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

MU0 = 4e-7 * math.pi
N52_REMANENCE = 1.45  # T


class LimitError(ValueError):
    """A joint angle at or beyond its hard stop."""

    def __init__(self, message: str, joint: int | None = None):
        super().__init__(message)
        self.joint = joint


class NoEquilibriumError(RuntimeError):
    def __init__(self, joint: int, torque_low: float, torque_high: float):
        super().__init__(
            f"joint {joint}: net torque does not change sign over its travel "
            f"(tau(-limit) = {torque_low:.6g} N m, tau(+limit) = {torque_high:.6g} N m)"
        )
        self.joint = joint
        self.torque_low = torque_low
        self.torque_high = torque_high


def cylinder_moment(diameter: float, length: float, remanence: float = N52_REMANENCE) -> float:
    """Dipole moment B_r V / mu0 of a uniformly magnetised cylinder (A m^2)."""
    volume = math.pi * (diameter / 2) ** 2 * length
    return remanence * volume / MU0


def magnet_pair_force(moment1, moment2, separation):
    """Repulsion (N, positive) between coaxial anti-aligned point dipoles."""
    s = np.asarray(separation, dtype=float)
    if np.any(s <= 0):
        raise ValueError("separation must be > 0")
    out = 3.0 * MU0 * moment1 * moment2 / (2.0 * math.pi * s**4)
    return float(out) if out.ndim == 0 else out


def magnet_pair_energy(moment1, moment2, separation):
    """Interaction energy (J) whose negative separation-derivative is the force above."""
    s = np.asarray(separation, dtype=float)
    out = MU0 * moment1 * moment2 / (2.0 * math.pi * s**3)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RibcageGeometry:
    n_joints: int = 4
    magnets_per_joint: int = 8
    magnet_moment: float = cylinder_moment(4e-3, 5e-3)
    rail_gap: float = 10e-3
    lever_arm: float = 10e-3
    constrained: bool = True
    max_angle_constrained: float = math.radians(30.0)
    max_angle_free: float = math.radians(50.0)
    # fraction of a full joint's magnet coupling acting between adjacent passive links
    neighbor_coupling: float = 0.25
    contact_gap: float = 0.2e-3

    def __post_init__(self):
        if self.n_joints < 1:
            raise ValueError("n_joints must be >= 1")
        if self.magnets_per_joint < 2 or self.magnets_per_joint % 2:
            raise ValueError("magnets_per_joint must be a positive even number")
        if self.rail_gap <= 0 or self.lever_arm <= 0:
            raise ValueError("rail_gap and lever_arm must be > 0")
        if not 0 < self.max_angle_constrained < self.max_angle_free:
            raise ValueError("need 0 < max_angle_constrained < max_angle_free")
        if self.magnet_moment < 0:
            raise ValueError("magnet_moment must be >= 0")
        if not 0 < self.contact_gap < self.rail_gap:
            raise ValueError("contact_gap must lie in (0, rail_gap)")
        if self.neighbor_coupling < 0:
            raise ValueError("neighbor_coupling must be >= 0")

    @property
    def pairs_per_side(self) -> float:
        return self.magnets_per_joint / 4

    def with_values(self, **changes) -> "RibcageGeometry":
        return replace(self, **changes)


def max_bend_angle(geom: RibcageGeometry) -> float:
    return geom.max_angle_constrained if geom.constrained else geom.max_angle_free


def _gaps(geom: RibcageGeometry, alpha):
    lift = geom.lever_arm * np.sin(alpha)
    s_outer = np.maximum(geom.rail_gap + lift, geom.contact_gap)
    s_inner = np.maximum(geom.rail_gap - lift, geom.contact_gap)
    return s_outer, s_inner


def _torque(geom: RibcageGeometry, alpha):
    """Unchecked torque; vectorised over alpha."""
    alpha = np.asarray(alpha, dtype=float)
    s_outer, s_inner = _gaps(geom, alpha)
    k = 3.0 * MU0 * geom.magnet_moment**2 / (2.0 * math.pi)
    return geom.pairs_per_side * geom.lever_arm * np.cos(alpha) * k * (s_outer**-4 - s_inner**-4)


def joint_torque(geom: RibcageGeometry, angle, joint: int | None = None):
    """Net magnetic torque (N m) about the joint axis at bend ``angle``."""
    limit = max_bend_angle(geom)
    a = np.asarray(angle, dtype=float)
    if np.any(np.abs(a) >= limit):
        where = "" if joint is None else f"joint {joint}: "
        raise LimitError(f"{where}|angle| must be < {limit:.6g} rad", joint)
    out = _torque(geom, a)
    return float(out) if out.ndim == 0 else out


def joint_energy(geom: RibcageGeometry, angle):
    """Magnetic potential energy (J) relative to infinite separation."""
    s_outer, s_inner = _gaps(geom, np.asarray(angle, dtype=float))
    e = magnet_pair_energy(geom.magnet_moment, geom.magnet_moment, s_outer) + magnet_pair_energy(
        geom.magnet_moment, geom.magnet_moment, s_inner
    )
    return geom.pairs_per_side * e


def joint_stiffness(geom: RibcageGeometry) -> float:
    """-dtau/dalpha at alpha = 0 (positive for a restoring spring)."""
    g = geom.rail_gap
    dF = -4.0 * magnet_pair_force(geom.magnet_moment, geom.magnet_moment, g) / g
    return -2.0 * geom.pairs_per_side * geom.lever_arm**2 * dF


def torque_curve(geom: RibcageGeometry, n_points: int = 201) -> tuple[np.ndarray, np.ndarray]:
    """Torque sampled on an open sweep strictly inside the hard stops."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    limit = max_bend_angle(geom)
    angles = np.linspace(-limit, limit, n_points + 2)[1:-1]
    return angles, _torque(geom, angles)


def write_torque_curve(path, geom: RibcageGeometry, n_points: int = 201) -> Path:
    path = Path(path)
    angles, torque = torque_curve(geom, n_points)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_rad", "torque_Nm"])
        for a, t in zip(angles, torque):
            w.writerow([f"{a:.9g}", f"{t:.9g}"])
    return path


# --------------------------------------------------------------------------
# passive chain


class SpineConfiguration(NamedTuple):
    servo_angles: np.ndarray
    passive_angles: np.ndarray


def _references(geom: RibcageGeometry, servo_angles) -> np.ndarray:
    servo = np.atleast_1d(np.asarray(servo_angles, dtype=float))
    if servo.size == 0 or geom.n_joints % servo.size:
        raise ValueError(f"{servo.size} servo angles cannot drive {geom.n_joints} passive joints")
    per = geom.n_joints // servo.size
    limit = max_bend_angle(geom)
    for i, a in enumerate(servo):
        if abs(a) > per * limit:
            raise LimitError(f"servo {i}: |angle| exceeds {per * limit:.6g} rad", i)
    return np.repeat(servo / per, per)


def _net_torque(geom, k, a, angles, ref, external):
    tau = _torque(geom, a - ref[k]) + external[k]
    if geom.neighbor_coupling:
        if k > 0:
            tau += geom.neighbor_coupling * _torque(geom, a - angles[k - 1])
        if k < len(angles) - 1:
            tau += geom.neighbor_coupling * _torque(geom, a - angles[k + 1])
    return float(tau)


def net_torques(geom: RibcageGeometry, servo_angles, passive_angles, external_torques=None) -> np.ndarray:
    ref = _references(geom, servo_angles)
    angles = np.asarray(passive_angles, dtype=float)
    ext = np.zeros(geom.n_joints) if external_torques is None else np.broadcast_to(
        np.asarray(external_torques, dtype=float), (geom.n_joints,))
    return np.array([_net_torque(geom, k, angles[k], angles, ref, ext) for k in range(geom.n_joints)])


def solve_passive_angles(
    geom: RibcageGeometry,
    servo_angles,
    external_torques=None,
    initial=None,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
) -> SpineConfiguration:
    """Equilibrium passive angles for given servo commands and external loads.

    Each passive joint is pulled toward its servo segment's share of the
    commanded bend and, more weakly, toward its neighbours. Joints are
    solved one at a time by bracketed root finding over their full travel,
    sweeping the chain until no angle moves by more than ``tol``.
    """
    ref = _references(geom, servo_angles)
    n = geom.n_joints
    ext = np.zeros(n) if external_torques is None else np.broadcast_to(
        np.asarray(external_torques, dtype=float), (n,)).copy()
    if ext.shape != (n,):
        raise ValueError(f"expected {n} external torques")
    limit = max_bend_angle(geom)
    angles = ref.copy() if initial is None else np.array(initial, dtype=float)

    for _ in range(max_sweeps):
        change = 0.0
        for k in range(n):
            f = lambda a: _net_torque(geom, k, a, angles, ref, ext)  # noqa: E731
            lo, hi = f(-limit), f(limit)
            if lo == 0.0 or hi == 0.0:
                new = -limit if lo == 0.0 else limit
            elif lo * hi > 0:
                raise NoEquilibriumError(k, lo, hi)
            else:
                new = brentq(f, -limit, limit, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
            change = max(change, abs(new - angles[k]))
            angles[k] = new
        if change <= tol:
            break
    else:
        raise RuntimeError(f"passive solve did not converge in {max_sweeps} sweeps")
    return SpineConfiguration(np.atleast_1d(np.asarray(servo_angles, dtype=float)), angles)


# --------------------------------------------------------------------------
# driven response


@dataclass
class DriveResponse:
    t: np.ndarray
    reference: np.ndarray  # (n_steps, n_joints)
    passive: np.ndarray
    mean_offset: float
    peak_variation: float


def drive_response(
    geom: RibcageGeometry,
    amplitude: float = 0.4,
    frequency: float = 0.7,
    n_cycles: int = 10,
    perturbation_sd: float = 2e-3,
    perturbation_interval: float = 0.05,
    damping: float = 1e-3,
    dt: float = 1e-3,
    seed: int | np.random.Generator = 0,
) -> DriveResponse:
    """Overdamped response of the passive chain to one sinusoidally driven servo.

    The load is a piecewise-constant random torque redrawn every
    ``perturbation_interval`` seconds; joints stop at their hard limits.
    ``mean_offset`` is the largest |mean(passive - reference)| over joints and
    ``peak_variation`` the largest standard deviation of per-cycle peaks.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = geom.n_joints
    limit = max_bend_angle(geom)
    steps_per_cycle = int(round(1.0 / (frequency * dt)))
    n_steps = n_cycles * steps_per_cycle
    hold = max(1, int(round(perturbation_interval / dt)))
    loads = rng.normal(0.0, perturbation_sd, (n_steps // hold + 1, n))

    t = np.arange(n_steps) * dt
    ref = np.outer(amplitude * np.sin(2 * math.pi * frequency * t), np.ones(n)) / n
    alpha = np.zeros(n)
    out = np.empty((n_steps, n))
    c = geom.neighbor_coupling
    for i in range(n_steps):
        tau = _torque(geom, alpha - ref[i]) + loads[i // hold]
        if c and n > 1:
            d = _torque(geom, np.diff(alpha))  # torque on joint k+1 from joint k
            tau[1:] += c * d
            tau[:-1] -= c * d
        alpha = np.clip(alpha + dt * tau / damping, -limit, limit)
        out[i] = alpha

    err = out - ref
    mean_offset = float(np.max(np.abs(err.mean(axis=0))))
    peaks = out.reshape(n_cycles, steps_per_cycle, n).max(axis=1)
    peak_variation = float(np.max(peaks.std(axis=0)))
    return DriveResponse(t, ref, out, mean_offset, peak_variation)
