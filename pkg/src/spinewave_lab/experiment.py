"""Run orchestration behind the command-line tool.

Every run writes ``manifest.json`` first (resolved config, its hash, seed,
package versions). ``optimize`` additionally streams ``database.jsonl``
and finishes with ``history.csv``, ``result.json`` and ``surface.csv``.
``resume`` rebuilds the run from the manifest and replays the database.
"""

from __future__ import annotations

import csv
import json
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_cpg,
    build_ego,
    build_problem,
    build_ribcage,
    config_hash,
)
from .cpg import extract_metrics, simulate
from .ego import EgoResult, EvaluationDatabase, run_ego, surface_grid
from .kriging import KrigingModel, TrainingSet, fit, FitConfig
from .magnetics import write_torque_curve

MANIFEST = "manifest.json"
DATABASE = "database.jsonl"


def _versions() -> dict:
    out = {"spinewave_lab": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(out_dir: Path, command: str, config: dict, seed: int, **extra) -> Path:
    manifest = {
        "command": command,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": config,
        "versions": _versions(),
        **extra,
    }
    path = out_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def export_surface_grid(
    model: KrigingModel,
    path,
    dims: tuple[int, int] = (0, 1),
    resolution: int = 50,
    slice_values=0.5,
    incumbent=None,
    negate: bool = False,
) -> Path:
    """Write the surrogate mean and sd over a grid slice in normalised space.

    The main CSV holds ``resolution**2`` rows ``x_i,x_j,mean,sd``. When
    ``incumbent`` (a normalised point) is given, a sidecar file
    ``<stem>.incumbent.csv`` with the same columns marks it. ``negate``
    flips the sign of the mean, for surrogates fitted to a negated objective.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    i, j = dims
    if not 0 <= i < j < model.dim:
        raise ValueError(f"dims must satisfy 0 <= i < j < {model.dim}")
    fixed = np.broadcast_to(np.asarray(slice_values, dtype=float), (model.dim,))
    P = surface_grid(model.dim, (i, j), resolution, fixed)
    pred = model.predict(P)
    sign = -1.0 if negate else 1.0
    path = Path(path)
    header = [f"x_{i + 1}", f"x_{j + 1}", "mean", "sd"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, m, s in zip(P, pred.mean, pred.sd):
            w.writerow([repr(float(p[i])), repr(float(p[j])), repr(sign * float(m)), repr(float(s))])
    if incumbent is not None:
        z = np.asarray(incumbent, dtype=float)
        inc = model.predict(z)
        with path.with_suffix(".incumbent.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerow([repr(float(z[i])), repr(float(z[j])), repr(sign * float(inc.mean)), repr(float(inc.sd))])
    return path


# --------------------------------------------------------------------------
# subcommands


def run_cpg_sim(config: dict, out_dir: Path) -> dict:
    params = build_cpg(config)
    c = config["cpg"]
    traj = simulate(params, c["duration"], c["dt"], output=c["output"])
    traj.to_csv(out_dir / "trajectory.csv")
    summary = {"n_steps": len(traj.t) - 1}
    try:
        m = extract_metrics(traj)
        summary.update(
            amplitude=m.amplitude.tolist(), frequency=m.frequency,
            phase_lag=m.phase_lag.tolist(), offset=m.offset.tolist(),
        )
    except ValueError as exc:
        summary["metrics_error"] = str(exc)
    _write_json(out_dir / "metrics.json", summary)
    return summary


def read_dataset(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """CSV with a header; the last column is the response."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--data", f"file not found: {path}")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ConfigError("--data", "need a header and at least one row with >= 2 columns")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError("--data", f"non-numeric entry ({exc})") from None
    return data[:, :-1], data[:, -1], rows[0]


def run_krig_fit(config: dict, out_dir: Path, data_path, seed: int, threads: int = 1) -> dict:
    X, y, header = read_dataset(data_path)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Z = (X - lo) / span
    k = dict(config["ego"]["kriging"])
    fcfg = FitConfig(seed=seed, n_workers=max(1, threads), **k)
    model = fit(TrainingSet(Z, y), fcfg)
    snapshot = model.to_dict()
    snapshot.update(columns=header, x_lower=lo.tolist(), x_upper=hi.tolist())
    _write_json(out_dir / "model.json", snapshot)
    o = config["output"]
    if model.dim >= 2:
        best = Z[int(np.argmin(y))]
        export_surface_grid(model, out_dir / "surface.csv", tuple(o["surface_dims"]),
                            o["surface_resolution"], 0.5, incumbent=best)
    return {"theta": model.theta.tolist(), "beta_hat": model.beta_hat, "sigma2_hat": model.sigma2_hat}


def run_magnetics_sweep(config: dict, out_dir: Path) -> dict:
    geom = build_ribcage(config)
    write_torque_curve(out_dir / "torque_curve.csv", geom, config["output"]["torque_points"])
    return {"n_points": config["output"]["torque_points"]}


def _finish_optimize(result: EgoResult, config: dict, out_dir: Path) -> dict:
    result.write_history(out_dir / "history.csv")
    summary = result.result_dict()
    _write_json(out_dir / "result.json", summary)
    o = config["output"]
    cfg = result.config
    if cfg.dim >= 2:
        export_surface_grid(
            result.model, out_dir / "surface.csv", tuple(o["surface_dims"]), o["surface_resolution"],
            0.5, incumbent=cfg.to_unit(result.best_x), negate=not cfg.minimize,
        )
    return summary


def run_optimize(config: dict, out_dir: Path, scenario: str, seed: int, threads: int = 1,
                 resume: bool = False) -> dict:
    problem = build_problem(config, scenario)
    ego_cfg = build_ego(config, problem.dim, problem.bounds, problem.minimize, seed, threads)
    db_path = out_dir / DATABASE
    if resume:
        db = EvaluationDatabase.load(db_path)
    else:
        if db_path.exists() and db_path.stat().st_size:
            raise ConfigError("output.dir", f"{db_path} already exists; use 'resume' to continue it")
        db_path.write_text("")
        db = EvaluationDatabase(db_path)
    result = run_ego(problem, ego_cfg, db)
    return _finish_optimize(result, config, out_dir)


def load_manifest(out_dir: Path) -> dict:
    path = out_dir / MANIFEST
    if not path.is_file():
        raise ConfigError("--out", f"no {MANIFEST} in {out_dir}")
    manifest = json.loads(path.read_text())
    if manifest.get("command") != "optimize":
        raise ConfigError("--out", "only optimize runs can be resumed")
    if config_hash(manifest["config"]) != manifest["config_hash"]:
        raise ConfigError("--out", f"{MANIFEST} config does not match its hash")
    return manifest
