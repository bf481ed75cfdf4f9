"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the ``criterion`` fixture (shown in
the terminal summary) and then asserts the same condition.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from test_kriging import dense_neg_loglik, oracle_instance

from spinewave_lab.cli import main
from spinewave_lab.cpg import CpgParams, extract_metrics, simulate, upcrossing_times
from spinewave_lab.ego import EgoConfig, ei_from_moments, random_search, run_ego
from spinewave_lab.experiment import export_surface_grid
from spinewave_lab.hydro import (
    DESIGN_BOUNDS,
    ScenarioProblem,
    ScenarioSpec,
    swimming_power,
    thrust_coefficient,
)
from spinewave_lab.kriging import FitConfig, TrainingSet, fit, neg_loglik
from spinewave_lab.magnetics import (
    RibcageGeometry,
    joint_energy,
    joint_torque,
    magnet_pair_force,
    max_bend_angle,
    solve_passive_angles,
)

PHI0 = 1 / math.sqrt(2 * math.pi)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def test_c01_kriging_interpolation(criterion):
    rng = np.random.default_rng(101)
    worst_res, worst_sd = 0.0, 0.0
    with Timer() as t:
        for i in range(20):
            dim = int(rng.integers(1, 5))
            n = int(rng.integers(2 * dim + 2, 31))
            X = rng.random((n, dim))
            y = np.sin(3 * X).sum(axis=1) + 0.5 * X[:, 0] ** 2
            model = fit(TrainingSet(X, y), FitConfig(nugget=0.0, seed=i))
            pred = model.predict(X)
            worst_res = max(worst_res, np.abs(pred.mean - y).max() / np.ptp(y))
            worst_sd = max(worst_sd, pred.sd.max() / math.sqrt(model.sigma2_hat))
    ok = worst_res <= 1e-6 and worst_sd <= 1e-6 and t.elapsed < 10
    criterion(1, "Kriging interpolation", ok,
              f"residual/range {worst_res:.2e}, sd/sigma {worst_sd:.2e}, {t.elapsed:.1f}s")
    assert ok


def test_c02_likelihood_oracle(criterion):
    rng = np.random.default_rng(202)
    cases = []
    for _ in range(100):
        theta, X, y = oracle_instance(rng, max_cond=1e8)
        cases.append((theta, X, y, dense_neg_loglik(theta, X, y)[0]))
    with Timer() as t:
        values = [neg_loglik(theta, TrainingSet(X, y)).value for theta, X, y, _ in cases]
    worst = max(abs(v - c[3]) for v, c in zip(values, cases))
    ok = worst <= 1e-8 and t.elapsed < 5
    criterion(2, "likelihood vs 50-digit oracle", ok,
              f"max |diff| {worst:.2e} over 100 cases with cond(R) <= 1e8, {t.elapsed:.2f}s")
    assert ok


def test_c03_ei_analytics(criterion):
    zero = ei_from_moments(-3.0, 0.0, 0.0) == 0.0 and ei_from_moments(3.0, 0.0, 0.0) == 0.0
    at_incumbent = abs(float(ei_from_moments(0.7, 1.0, 0.7)) - PHI0)
    rng = np.random.default_rng(303)
    mean = rng.uniform(-3, 3, 1000)
    sd = rng.uniform(0.5, 3, 1000)
    h = 1e-4
    slope = (ei_from_moments(mean, sd + h, 0.0) - ei_from_moments(mean, sd - h, 0.0)) / (2 * h)
    ok = zero and at_incumbent <= 1e-9 and bool((slope > 0).all())
    criterion(3, "EI analytics", ok,
              f"EI(sd=0)==0: {zero}, |EI-phi(0)| {at_incumbent:.1e}, min dEI/dsd {slope.min():.2e}")
    assert ok


def test_c04_budget_conformance(criterion):
    dim = 3
    cfg = EgoConfig(dim=dim, bounds=[(-2, 2)] * dim, seed=4)
    res = run_ego(sphere, cfg)
    tags = [r.tag for r in res.database.records]
    best = [h.best_so_far for h in res.history]
    X = np.array([r.x for r in res.database.records])
    ok = (
        tags.count("init") == 10 * dim
        and tags.count("infill") == 5 * dim
        and len(tags) == 15 * dim
        and all(b <= a for a, b in zip(best, best[1:]))
        and bool(((X >= -2) & (X <= 2)).all())
    )
    criterion(4, "EGO budget conformance", ok,
              f"{tags.count('init')} init + {tags.count('infill')} infill for Dim {dim}")
    assert ok


def test_c05_sphere(criterion):
    with Timer() as t:
        bests = [run_ego(sphere, EgoConfig(dim=2, bounds=[(-2, 2)] * 2, seed=s)).best_y for s in range(10)]
    median = float(np.median(bests))
    ok = median <= 0.05 and t.elapsed < 60
    criterion(5, "EGO on 2D sphere", ok, f"median best {median:.2e}, {t.elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_c06_ego_beats_random_search(criterion):
    problem = ScenarioProblem(ScenarioSpec("S1_thrust"))
    wins, rows = 0, []
    with Timer() as t:
        for seed in range(10):
            cfg = EgoConfig(dim=7, bounds=list(DESIGN_BOUNDS), seed=seed, minimize=False)
            ego = run_ego(problem, cfg)
            _, rand = random_search(problem, cfg, n=105, seed=seed)
            wins += ego.best_y >= rand
            rows.append(f"{ego.best_y:.3f}/{rand:.3f}")
    ok = wins >= 8 and t.elapsed < 300
    criterion(6, "EGO vs random search on S1", ok, f"{wins}/10 wins ({', '.join(rows)}), {t.elapsed:.0f}s")
    assert ok


ST_RANGE, AD_RANGE = (0.0, 1.0), (0.0, 0.5)


@pytest.fixture(scope="module")
def thrust_run():
    cfg = EgoConfig(dim=2, bounds=[ST_RANGE, AD_RANGE], seed=0, minimize=False)
    start = time.perf_counter()
    res = run_ego(lambda x: thrust_coefficient(x[0], x[1]), cfg)
    return res, time.perf_counter() - start


def test_c07_thrust_optimum_vs_grid(criterion, thrust_run, tmp_path):
    res, elapsed = thrust_run
    St, ad = np.meshgrid(np.linspace(*ST_RANGE, 500), np.linspace(*AD_RANGE, 500))
    grid_max = float(thrust_coefficient(St, ad).max())
    path = export_surface_grid(res.model, tmp_path / "surface.csv", negate=True,
                               incumbent=res.config.to_unit(res.best_x))
    mean = np.loadtxt(path, delimiter=",", skiprows=1)[:, 2]
    sign_change = mean.min() < 0 < mean.max()
    ok = res.best_y >= 0.95 * grid_max and sign_change and elapsed < 60
    criterion(7, "S1 thrust optimum vs 500x500 grid", ok,
              f"best {res.best_y:.4f} vs grid {grid_max:.4f}, surface sign change {sign_change}, {elapsed:.1f}s")
    assert ok


def test_c08_surface_convergence(criterion, thrust_run):
    res, _ = thrust_run
    d = res.surface_deltas()
    first, last = float(d[:3].max()), float(d[-3:].max())
    ok = last < first
    criterion(8, "surface delta shrinks", ok, f"first-3 max {first:.4g}, last-3 max {last:.4g}")
    assert ok


def test_c09_frequency_matching(criterion):
    spec = ScenarioSpec("S3_vortex")
    problem = ScenarioProblem(spec)
    x = np.array([0.5 * (lo + hi) for lo, hi in DESIGN_BOUNDS])
    sweep = []
    for omega in np.linspace(*DESIGN_BOUNDS[0], 481):
        x[0] = omega
        _, m = problem(x)
        sweep.append((m["power"], m["f"], m["A_pp"]))
    _, f_opt, A_pp = min(sweep)
    f_s = spec.shedding_frequency
    rel = abs(f_opt - f_s) / f_s
    c = spec.constants
    baseline = c.P0 * f_s**3 * A_pp**2
    ratio_err = abs(swimming_power(f_s, A_pp, f_s, c) - 0.71 * baseline)
    ok = rel <= 0.05 and ratio_err <= 1e-9
    criterion(9, "S3 frequency matching", ok,
              f"f_opt {f_opt:.4f} Hz vs f_s {f_s:.4f} Hz ({rel:.1%}), |P - 0.71 P_base| {ratio_err:.1e}")
    assert ok


def test_c10_cpg_properties(criterion):
    with Timer() as t:
        eps, b, omega = 0.64, 0.3, 2 * math.pi * 0.7
        single = CpgParams(omega=omega, epsilon=[eps], b=b, h=0.0, j=0.0)
        traj = simulate(single, 30.0, 1e-3, initial=[[0.05, b]])
        radius_err = abs(math.hypot(traj.u[-1, 0], traj.v[-1, 0] - b) - math.sqrt(eps))
        ups = upcrossing_times(traj.t, traj.u[:, 0])
        ups = ups[ups > 15.0]
        period_err = abs(np.diff(ups).mean() / (2 * math.pi / omega) - 1)
        cycle = (traj.t >= ups[-2]) & (traj.t < ups[-1])
        offset_err = abs(traj.v[cycle, 0].mean() - b)

        chain = CpgParams.preset(5)
        m = extract_metrics(simulate(chain, 90.0, 1e-3), settle_fraction=0.8)
        lag_err = float(np.abs(m.phase_lag - chain.theta).max())
    ok = radius_err <= 1e-3 and period_err <= 0.01 and offset_err <= 1e-3 and lag_err <= 0.05 and t.elapsed < 10
    criterion(10, "CPG properties", ok,
              f"radius {radius_err:.1e}, period {period_err:.1e}, offset {offset_err:.1e}, "
              f"lag {lag_err:.3f} rad, {t.elapsed:.1f}s")
    assert ok


def test_c11_magnetics(criterion):
    geom = RibcageGeometry()
    a = np.linspace(-0.5, 0.5, 1001)
    tau = joint_torque(geom, a)
    odd = float(np.abs(tau + tau[::-1]).max())
    zero = abs(joint_torque(geom, 0.0))
    m = geom.magnet_moment
    s = np.linspace(2e-3, 3e-2, 50)
    scaling = float(np.max(np.abs(magnet_pair_force(m, m, 2 * s) / (magnet_pair_force(m, m, s) / 16) - 1)))

    single = RibcageGeometry(n_joints=1)
    limit = max_bend_angle(single)
    scan = np.linspace(-limit, limit, 100_002)[1:-1]
    worst = 0.0
    for servo, load in [(0.0, 0.0), (0.2, 0.0), (0.0, 0.01), (-0.15, -0.02), (0.3, 0.005)]:
        oracle = scan[np.argmin(joint_energy(single, scan - servo) - load * scan)]
        solved = solve_passive_angles(single, [servo], [load]).passive_angles[0]
        worst = max(worst, abs(solved - oracle))
    limits = (max_bend_angle(geom), max_bend_angle(geom.with_values(constrained=False)))
    limits_ok = limits == pytest.approx((math.radians(30), math.radians(50)), abs=1e-15)
    ok = zero <= 1e-12 and odd <= 1e-12 and scaling <= 1e-12 and worst <= 1e-4 and limits_ok
    criterion(11, "magnetics", ok,
              f"tau(0) {zero:.0e}, odd {odd:.0e}, F scaling {scaling:.0e}, oracle {worst:.1e} rad, "
              f"limits {math.degrees(limits[0]):.0f}/{math.degrees(limits[1]):.0f} deg")
    assert ok


def test_c12_determinism_and_resume(criterion, tmp_path):
    fast = ["--set", "ego.n_init=10", "--set", "ego.n_infill=12", "--set", "ego.ga.generations=30"]
    args = ["optimize", "--scenario", "s1", "--seed", "11", *fast]
    a, b, full, killed = (tmp_path / n for n in ("a", "b", "full", "killed"))
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    identical = (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
    assert main([*args, "--out", str(full)]) == 0

    # a real process killed mid-run, then resumed
    proc = subprocess.Popen([sys.executable, "-m", "spinewave_lab.cli", *args, "--out", str(killed)],
                            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    db = killed / "database.jsonl"
    deadline = time.monotonic() + 120
    while time.monotonic() < deadline and proc.poll() is None:
        if db.exists() and len(db.read_text().splitlines()) >= 14:
            proc.kill()
            break
        time.sleep(0.01)
    proc.wait()
    n_at_kill = len(db.read_text().splitlines())
    interrupted = not (killed / "history.csv").exists()
    assert main(["resume", "--out", str(killed)]) == 0
    resumed = all((killed / f).read_bytes() == (full / f).read_bytes()
                  for f in ("database.jsonl", "history.csv", "surface.csv"))
    same_result = json.loads((killed / "result.json").read_text())["best_y"] == \
        json.loads((full / "result.json").read_text())["best_y"]
    ok = identical and resumed and same_result
    criterion(12, "determinism and resume", ok,
              f"identical histories {identical}, killed after {n_at_kill} records "
              f"(interrupted {interrupted}), resumed == uninterrupted {resumed}")
    assert ok
