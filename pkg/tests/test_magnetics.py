import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinewave_lab.magnetics import (
    MU0,
    LimitError,
    NoEquilibriumError,
    RibcageGeometry,
    cylinder_moment,
    drive_response,
    joint_energy,
    joint_stiffness,
    joint_torque,
    magnet_pair_energy,
    magnet_pair_force,
    max_bend_angle,
    net_torques,
    solve_passive_angles,
    torque_curve,
    write_torque_curve,
)

GEOM = RibcageGeometry()
SINGLE = RibcageGeometry(n_joints=1)


def energy_scan(geom, servo, external, n=100_000):
    """Minimiser of magnetic energy minus external work on a dense grid."""
    limit = max_bend_angle(geom)
    a = np.linspace(-limit, limit, n + 2)[1:-1]
    potential = joint_energy(geom, a - servo) - external * a
    return a[np.argmin(potential)]


# --------------------------------------------------------------------------
# dipole pair


@given(s=st.floats(1e-3, 0.1), m=st.floats(1e-3, 1.0))
def test_force_inverse_fourth_power(s, m):
    assert magnet_pair_force(m, m, 2 * s) == pytest.approx(magnet_pair_force(m, m, s) / 16, rel=1e-12)


def test_force_reference_value():
    # two 1 A m^2 dipoles 1 cm apart: 3 mu0 / (2 pi 1e-8)
    assert magnet_pair_force(1.0, 1.0, 0.01) == pytest.approx(3 * MU0 / (2 * math.pi * 1e-8), rel=1e-14)


def test_force_is_minus_energy_gradient():
    s, h = 0.012, 1e-7
    m = cylinder_moment(4e-3, 5e-3)
    grad = (magnet_pair_energy(m, m, s + h) - magnet_pair_energy(m, m, s - h)) / (2 * h)
    assert magnet_pair_force(m, m, s) == pytest.approx(-grad, rel=1e-7)


def test_cylinder_moment():
    assert cylinder_moment(4e-3, 5e-3) == pytest.approx(0.0725, rel=2e-3)


def test_nonpositive_separation_rejected():
    with pytest.raises(ValueError):
        magnet_pair_force(1.0, 1.0, [0.01, 0.0])


# --------------------------------------------------------------------------
# single joint


def test_zero_torque_at_rest_and_odd_symmetry():
    assert joint_torque(GEOM, 0.0) == 0.0
    a = np.linspace(-0.5, 0.5, 1001)
    tau = joint_torque(GEOM, a)
    assert np.abs(tau + tau[::-1]).max() <= 1e-12
    assert (tau[a > 0] < 0).all()  # restoring


@settings(max_examples=50)
@given(a=st.floats(0.0, 0.5))
def test_odd_symmetry_pointwise(a):
    assert abs(joint_torque(GEOM, a) + joint_torque(GEOM, -a)) <= 1e-12


def test_stiffness_matches_finite_difference():
    h = 1e-6
    fd = -(joint_torque(GEOM, h) - joint_torque(GEOM, -h)) / (2 * h)
    assert joint_stiffness(GEOM) == pytest.approx(fd, rel=1e-6)
    assert joint_stiffness(GEOM) > 0


def test_torque_is_minus_energy_gradient():
    a = np.linspace(-0.45, 0.45, 37)
    h = 1e-6
    grad = (joint_energy(GEOM, a + h) - joint_energy(GEOM, a - h)) / (2 * h)
    assert np.allclose(joint_torque(GEOM, a), -grad, rtol=1e-6, atol=1e-12)


def test_energy_minimum_at_rest():
    a = np.linspace(-0.5, 0.5, 2001)
    assert a[np.argmin(joint_energy(GEOM, a))] == pytest.approx(0.0, abs=1e-12)


def test_doubled_moment_quadruples_torque():
    double = GEOM.with_values(magnet_moment=2 * GEOM.magnet_moment)
    a = np.linspace(-0.5, 0.5, 11)
    assert np.allclose(joint_torque(double, a), 4 * joint_torque(GEOM, a), rtol=1e-13, atol=0)


def test_torque_continuous_across_sweep():
    angles, tau = torque_curve(GEOM, 2001)
    step = np.abs(np.diff(tau)).max()
    assert step < 0.01 * np.abs(tau).max()


def test_bend_limits():
    assert max_bend_angle(GEOM) == pytest.approx(math.radians(30), abs=1e-15)
    assert max_bend_angle(GEOM.with_values(constrained=False)) == pytest.approx(math.radians(50), abs=1e-15)
    custom = GEOM.with_values(max_angle_constrained=0.40)
    assert max_bend_angle(custom) == 0.40


def test_angle_at_stop_raises_limit_error():
    with pytest.raises(LimitError) as err:
        joint_torque(GEOM, math.radians(30), joint=2)
    assert err.value.joint == 2
    # unconstrained geometry accepts the same angle
    assert joint_torque(GEOM.with_values(constrained=False), math.radians(30)) < 0


@pytest.mark.parametrize(
    "kw",
    [dict(n_joints=0), dict(magnets_per_joint=3), dict(rail_gap=0.0), dict(contact_gap=0.02),
     dict(max_angle_constrained=1.0), dict(neighbor_coupling=-1.0)],
)
def test_geometry_validation(kw):
    with pytest.raises(ValueError):
        RibcageGeometry(**kw)


def test_torque_curve_csv(tmp_path):
    path = write_torque_curve(tmp_path / "t.csv", GEOM, 11)
    lines = path.read_text().splitlines()
    assert lines[0] == "angle_rad,torque_Nm"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (11, 2)
    assert np.abs(data[:, 0]).max() < max_bend_angle(GEOM)
    assert data[5, 0] == pytest.approx(0.0, abs=1e-12)


# --------------------------------------------------------------------------
# passive chain


@pytest.mark.parametrize("servo, external", [(0.0, 0.0), (0.2, 0.0), (0.0, 0.01), (-0.1, -0.02), (0.3, 0.005)])
def test_single_joint_matches_energy_scan(servo, external):
    sol = solve_passive_angles(SINGLE, [servo], [external])
    assert sol.passive_angles[0] == pytest.approx(energy_scan(SINGLE, servo, external), abs=1e-4)


@settings(max_examples=20, deadline=None)
@given(servo=st.floats(-0.4, 0.4), external=st.floats(-0.02, 0.02))
def test_single_joint_oracle_property(servo, external):
    # a scan minimum pinned to the end of travel means the joint sits on its stop
    expected = energy_scan(SINGLE, servo, external)
    if abs(expected) > max_bend_angle(SINGLE) - 1e-3:
        with pytest.raises(NoEquilibriumError):
            solve_passive_angles(SINGLE, [servo], [external])
        return
    sol = solve_passive_angles(SINGLE, [servo], [external])
    assert sol.passive_angles[0] == pytest.approx(expected, abs=1e-4)


def test_chain_residual_vanishes():
    sol = solve_passive_angles(GEOM, [0.3, -0.1], [0.004, -0.002, 0.001, 0.0])
    assert np.abs(net_torques(GEOM, [0.3, -0.1], sol.passive_angles, [0.004, -0.002, 0.001, 0.0])).max() < 1e-9


def test_solve_is_idempotent():
    first = solve_passive_angles(GEOM, [0.2], 0.003)
    again = solve_passive_angles(GEOM, [0.2], 0.003, initial=first.passive_angles)
    assert np.allclose(first.passive_angles, again.passive_angles, atol=1e-9)


def test_unloaded_chain_shares_the_servo_bend():
    sol = solve_passive_angles(GEOM, [0.4])
    assert np.allclose(sol.passive_angles, 0.1, atol=1e-10)


def test_overload_has_no_equilibrium():
    huge = 10 * joint_stiffness(SINGLE)
    with pytest.raises(NoEquilibriumError) as err:
        solve_passive_angles(SINGLE, [0.0], [huge])
    assert err.value.joint == 0
    assert err.value.torque_low > 0 and err.value.torque_high > 0


def test_servo_beyond_travel_raises():
    with pytest.raises(LimitError):
        solve_passive_angles(GEOM, [5 * max_bend_angle(GEOM)])


def test_servo_count_must_divide_joints():
    with pytest.raises(ValueError):
        solve_passive_angles(GEOM, [0.1, 0.1, 0.1])


def test_magnetic_spring_tracks_better_than_free_links():
    stiff = drive_response(GEOM, seed=1)
    # a vanishing moment leaves the links to the random load alone
    loose = drive_response(GEOM.with_values(magnet_moment=1e-4), seed=1)
    assert stiff.mean_offset < loose.mean_offset
    assert stiff.peak_variation < loose.peak_variation
    assert stiff.passive.shape == stiff.reference.shape
