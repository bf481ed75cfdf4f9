"""Closed-form stand-ins for the tank force measurements of four swimming tasks.

None of these formulas is a fluid model. They are smooth synthetic
objectives with the qualitative features of the experiments: a thrust/drag
transition in (St, A/d), a side-flow moment that a gait offset cancels,
a power saving when the tail beat locks onto a cylinder's shedding
frequency, and an interior Strouhal optimum for turning.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .cpg import CpgParams, limit_cycle_state, simulate, upcrossing_times

SCENARIOS = ("S1_thrust", "S2_sideflow", "S3_vortex", "S4_turning")
_ALIASES = {"s1": "S1_thrust", "s2": "S2_sideflow", "s3": "S3_vortex", "s4": "S4_turning"}
MAXIMIZE = {"S1_thrust": True, "S2_sideflow": False, "S3_vortex": False, "S4_turning": True}

LINK_PRESETS = {1: (0.25,), 3: (0.10, 0.10, 0.10), 5: (0.08,) * 5}

DESIGN_NAMES = ("omega", "epsilon_head", "epsilon_tail", "theta", "b", "h", "j")
# Joint amplitudes of ~0.1 rad need epsilon ~ 0.01; k = 10 keeps the
# coupling-to-radial-stiffness ratio h / (k^2 eps) of the unit-amplitude preset.
PLANT_GAIN = 10.0
DESIGN_BOUNDS = (
    (2 * math.pi * 0.3, 2 * math.pi * 1.5),
    (0.0, 0.01),
    (0.0, 0.01),
    (math.pi / 8, math.pi / 2),
    (-0.2, 0.2),
    (0.0, 1.0),
    (0.0, 1.0),
)


class ScenarioError(ValueError):
    """Unknown scenario kind or invalid scenario constants."""


@dataclass(frozen=True)
class BodyGeometry:
    body_length: float = 0.725
    body_depth: float = 0.10
    link_lengths: tuple[float, ...] = LINK_PRESETS[5]

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        if self.body_length <= 0 or self.body_depth <= 0:
            raise ValueError("body_length and body_depth must be > 0")
        if not self.link_lengths or min(self.link_lengths) <= 0:
            raise ValueError("link lengths must be > 0")
        if sum(self.link_lengths) > self.body_length + 1e-12:
            raise ValueError("links are longer than the body")

    @property
    def n_segments(self) -> int:
        return len(self.link_lengths)

    @classmethod
    def preset(cls, n_segments: int = 5, **overrides) -> "BodyGeometry":
        if n_segments not in LINK_PRESETS:
            raise ValueError("n_segments must be 1, 3 or 5")
        return cls(link_lengths=LINK_PRESETS[n_segments], **overrides)


@dataclass(frozen=True)
class PlantConstants:
    c_t1: float = 6.0
    c_d0: float = 0.12
    c_d1: float = 1.5
    c_m1: float = 1.0
    St_m: float = 0.6
    eta_v: float = 0.29
    sigma_f: float = 0.1  # Hz
    P0: float = 1.0
    kappa: float = 1.0
    penalty: float = 10.0
    eps_T: float = 0.02
    shedding_strouhal: float = 0.2
    strouhal_amplitude: str = "peak_to_peak"  # or "half"
    # "shedding": baseline power scales with f_s^3, "gait": with the gait's own f^3
    power_frequency_scaling: str = "shedding"

    def validate(self) -> None:
        if self.eta_v > 0.29:
            raise ScenarioError("eta_v must not exceed 0.29")
        if self.sigma_f <= 0 or self.St_m <= 0:
            raise ScenarioError("sigma_f and St_m must be > 0")
        if self.strouhal_amplitude not in ("peak_to_peak", "half"):
            raise ScenarioError(f"strouhal_amplitude: unknown convention {self.strouhal_amplitude!r}")
        if self.power_frequency_scaling not in ("shedding", "gait"):
            raise ScenarioError(f"power_frequency_scaling: unknown option {self.power_frequency_scaling!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "S1_thrust"
    U: float = 0.3
    flow_angle: float = math.radians(15.0)
    cylinder_diameter: float = 0.08
    lambda_torque: float = 1.0
    constants: PlantConstants = field(default_factory=PlantConstants)

    def __post_init__(self):
        kind = _ALIASES.get(str(self.kind).lower(), self.kind)
        if kind not in SCENARIOS:
            raise ScenarioError(f"kind: unknown scenario {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.U < 0:
            raise ScenarioError("U must be >= 0")
        if self.cylinder_diameter <= 0:
            raise ScenarioError("cylinder_diameter must be > 0")
        self.constants.validate()

    @property
    def maximize(self) -> bool:
        return MAXIMIZE[self.kind]

    @property
    def shedding_frequency(self) -> float:
        return self.constants.shedding_strouhal * self.U / self.cylinder_diameter


@dataclass(frozen=True)
class SwimKinematics:
    f: float
    A: float
    A_pp: float
    St: float
    a_over_d: float
    b_eff: float


# --------------------------------------------------------------------------
# kinematics


def _strouhal(f: float, A_pp: float, U: float, constants: PlantConstants) -> float:
    amp = A_pp if constants.strouhal_amplitude == "peak_to_peak" else A_pp / 2
    if f * amp == 0.0:
        return 0.0
    return f * amp / U if U > 0 else math.inf


def kinematics_from_angles(
    t: np.ndarray,
    angles: np.ndarray,
    geom: BodyGeometry,
    U: float = 0.3,
    constants: PlantConstants | None = None,
) -> SwimKinematics:
    """Tail-tip kinematics of a planar link chain driven by joint angle series.

    ``angles`` is (n_steps, n_joints), one column per link, each relative to
    the previous link. The window should hold whole beat cycles; the
    statistics use the span between the first and last upward crossing of
    the tip's mean position.
    """
    constants = constants or PlantConstants()
    angles = np.asarray(angles, dtype=float).reshape(len(t), -1)
    if angles.shape[1] != geom.n_segments:
        raise ValueError(f"{angles.shape[1]} angle channels for {geom.n_segments} links")
    heading = np.cumsum(angles, axis=1)
    y_tip = np.sin(heading) @ np.asarray(geom.link_lengths)
    tip_angle = heading[:, -1]

    f, window = 0.0, slice(None)
    if np.ptp(y_tip) > 1e-12 * sum(geom.link_lengths):
        ups = upcrossing_times(t, y_tip, float(np.mean(y_tip)))
        if len(ups) >= 2:
            f = float((len(ups) - 1) / (ups[-1] - ups[0]))
            window = (t >= ups[0]) & (t < ups[-1])
    if f == 0.0:
        return SwimKinematics(0.0, 0.0, 0.0, 0.0, 0.0, float(np.mean(tip_angle)))
    A_pp = float(np.ptp(y_tip[window]))
    St = float(_strouhal(f, A_pp, U, constants))
    return SwimKinematics(f, A_pp / 2, A_pp, St, A_pp / geom.body_depth, float(np.mean(tip_angle[window])))


def derive_kinematics(
    params: CpgParams,
    geom: BodyGeometry,
    U: float = 0.3,
    constants: PlantConstants | None = None,
    settle_periods: float = 10.0,
    measure_periods: float = 4.0,
    steps_per_period: int = 100,
) -> SwimKinematics:
    """Simulate the CPG from its nominal travelling wave and measure the tail beat."""
    if params.n_body != geom.n_segments:
        raise ValueError(f"CPG drives {params.n_body} joints, body has {geom.n_segments} links")
    period = 2 * math.pi / params.omega
    dt = period / steps_per_period
    traj = simulate(params, (settle_periods + measure_periods) * period, dt,
                    initial=limit_cycle_state(params))
    keep = traj.t >= settle_periods * period
    body = traj.angle[keep, : params.n_body]
    return kinematics_from_angles(traj.t[keep], body, geom, U, constants)


# --------------------------------------------------------------------------
# coefficients


def thrust_coefficient(St, a_over_d, constants: PlantConstants | None = None):
    c = constants or PlantConstants()
    St = np.asarray(St, dtype=float)
    a = np.asarray(a_over_d, dtype=float)
    if np.any(St < 0) or np.any(a < 0):
        raise ValueError("St and a_over_d must be >= 0")
    out = c.c_t1 * St**2 * a - c.c_d0 * (1 + c.c_d1 * a**2)
    return float(out) if out.ndim == 0 else out


def turning_moment(St, a_over_d, b_eff, constants: PlantConstants | None = None):
    c = constants or PlantConstants()
    St = np.asarray(St, dtype=float)
    out = c.c_m1 * np.sin(b_eff) * St * np.exp(-((St / c.St_m) ** 2)) * np.asarray(a_over_d, dtype=float)
    return float(out) if out.ndim == 0 else out


def vortex_factor(f, f_s: float, constants: PlantConstants | None = None):
    c = constants or PlantConstants()
    return 1.0 - c.eta_v * np.exp(-(((np.asarray(f, dtype=float) - f_s) / c.sigma_f) ** 2))


def swimming_power(f, A_pp, f_s: float, constants: PlantConstants | None = None):
    """Mechanical power proxy P0 f_ref^3 A_pp^2 times the vortex-capture factor."""
    c = constants or PlantConstants()
    f_ref = f_s if c.power_frequency_scaling == "shedding" else np.asarray(f, dtype=float)
    out = c.P0 * f_ref**3 * np.asarray(A_pp, dtype=float) ** 2 * vortex_factor(f, f_s, c)
    return float(out) if np.ndim(out) == 0 else out


def scenario_from_kinematics(spec: ScenarioSpec, kin: SwimKinematics) -> tuple[float, dict]:
    c = spec.constants
    ct = thrust_coefficient(kin.St, kin.a_over_d, c)
    metrics = {"f": kin.f, "A_pp": kin.A_pp, "St": kin.St, "a_over_d": kin.a_over_d,
               "b_eff": kin.b_eff, "C_T": ct}
    if spec.kind == "S1_thrust":
        value = ct
    elif spec.kind == "S2_sideflow":
        U_eff = spec.U * math.cos(spec.flow_angle)
        ct_eff = thrust_coefficient(_strouhal(kin.f, kin.A_pp, U_eff, c), kin.a_over_d, c)
        cm = c.c_m1 * (math.sin(spec.flow_angle) - c.kappa * math.sin(kin.b_eff))
        metrics.update(C_T_eff=ct_eff, C_M=cm)
        value = abs(ct_eff) + spec.lambda_torque * abs(cm)
    elif spec.kind == "S3_vortex":
        f_s = spec.shedding_frequency
        power = swimming_power(kin.f, kin.A_pp, f_s, c)
        metrics.update(f_s=f_s, power=power)
        value = power + c.penalty * max(0.0, abs(ct) - c.eps_T)
    else:
        value = turning_moment(kin.St, kin.a_over_d, kin.b_eff, c)
        metrics.update(C_M_turn=value)
    return float(value), metrics


def scenario_objective(spec: ScenarioSpec, params: CpgParams, geom: BodyGeometry) -> tuple[float, dict]:
    """Objective value (to maximise for S1/S4, minimise for S2/S3) and a metrics record."""
    kin = derive_kinematics(params, geom, spec.U, spec.constants)
    return scenario_from_kinematics(spec, kin)


# --------------------------------------------------------------------------
# design vector


def params_from_design(x: Sequence[float], n_segments: int = 5, k: float = PLANT_GAIN) -> CpgParams:
    """CPG parameters from (omega, eps_head, eps_tail, theta, b, h, j)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(DESIGN_NAMES),):
        raise ValueError(f"design vector must have {len(DESIGN_NAMES)} entries")
    omega, e_head, e_tail, theta, b, h, j = x
    eps = np.linspace(e_head, e_tail, n_segments) if n_segments > 1 else np.array([0.5 * (e_head + e_tail)])
    return CpgParams(omega=omega, epsilon=np.maximum(eps, 0.0), b=b, k=k, theta=theta, h=h, j=j)


@dataclass(frozen=True)
class ScenarioProblem:
    """A scenario as a black-box function of the 7-parameter design vector."""

    spec: ScenarioSpec = field(default_factory=ScenarioSpec)
    geom: BodyGeometry = field(default_factory=BodyGeometry)
    bounds: tuple[tuple[float, float], ...] = DESIGN_BOUNDS
    k: float = PLANT_GAIN

    @property
    def dim(self) -> int:
        return len(DESIGN_NAMES)

    @property
    def minimize(self) -> bool:
        return not self.spec.maximize

    def __call__(self, x) -> tuple[float, dict]:
        params = params_from_design(x, self.geom.n_segments, self.k)
        return scenario_objective(self.spec, params, self.geom)

    def with_spec(self, **changes) -> "ScenarioProblem":
        return replace(self, spec=replace(self.spec, **changes))

    def describe(self) -> dict:
        return {"spec": asdict(self.spec), "geom": asdict(self.geom), "bounds": [list(b) for b in self.bounds]}
