"""JSON run configuration: defaults, dotted overrides and typed builders.

A config file has the sections ``cpg``, ``ribcage``, ``plant``, ``ego`` and
``output`` plus a top-level ``seed``. Missing keys fall back to the defaults
below; unknown keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import re
from dataclasses import fields
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .cpg import CpgParams
from .ego import EgoConfig
from .ga import GAConfig
from .hydro import DESIGN_BOUNDS, PLANT_GAIN, BodyGeometry, PlantConstants, ScenarioProblem, ScenarioSpec
from .kriging import FitConfig
from .magnetics import RibcageGeometry

SEED_ENV = "SPINEWAVE_SEED"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "cpg": {
        "n_segments": 5,
        "pectoral": False,
        "omega": 2 * math.pi * 0.7,
        "epsilon": 1.0,
        "b": 0.0,
        "k": 1.0,
        "theta": math.pi / 4,
        "h": 0.5,
        "j": 0.5,
        "coupling": "consistent",
        "duration": 30.0,
        "dt": 1e-3,
        "output": "v",
    },
    "ribcage": {f.name: f.default for f in fields(RibcageGeometry)},
    "plant": {
        "scenario": "s1",
        "U": 0.3,
        "flow_angle": math.radians(15.0),
        "cylinder_diameter": 0.08,
        "lambda_torque": 1.0,
        "k": PLANT_GAIN,
        "bounds": [list(b) for b in DESIGN_BOUNDS],
        "body": {"n_segments": 5, "body_length": 0.725, "body_depth": 0.10, "link_lengths": None},
        "constants": {f.name: f.default for f in fields(PlantConstants)},
    },
    "ego": {
        "n_init": None,
        "n_infill": None,
        "refit_starts": 2,
        "surface_dims": [0, 1],
        "surface_resolution": 50,
        "duplicate_tol": 1e-9,
        "jitter_sd": 1e-6,
        "max_failures_per_iter": 5,
        "random_fallbacks": 20,
        "failure_radius": 0.02,
        "ga": {f.name: f.default for f in fields(GAConfig)},
        "kriging": {f.name: f.default for f in fields(FitConfig) if f.name not in ("seed", "n_workers")},
    },
    "output": {
        "dir": "runs/latest",
        "surface_resolution": 50,
        "surface_dims": [0, 1],
        "torque_points": 201,
    },
}


def _merge(base: dict, update: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(path, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(path, "expected an object")
            out[key] = _merge(base[key], val, path + ".")
        elif isinstance(val, dict):
            raise ConfigError(path, "is not a section")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides: Iterable[str]) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as JSON when possible."""
    update: dict[str, Any] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, _, text = item.partition("=")
        parts = key.strip().split(".")
        node = update
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "conflicting overrides")
        node[parts[-1]] = _parse_value(text)
    return _merge(config, update)


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> dict:
    """Defaults, then the JSON file (if any), then dotted overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError("--config", f"file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("--config", "top level must be an object")
        cfg = _merge(cfg, data)
    return apply_overrides(cfg, overrides)


def resolve_seed(config: dict, flag: int | None = None, environ=os.environ) -> int:
    """Seed precedence: config < SPINEWAVE_SEED < --seed."""
    seed = config.get("seed", 0)
    if environ.get(SEED_ENV):
        try:
            seed = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(SEED_ENV, "must be an integer") from None
    if flag is not None:
        seed = flag
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "must be an integer")
    return seed


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# --------------------------------------------------------------------------
# builders


def _build(section: str, factory, **kwargs):
    """Call ``factory`` and turn its validation errors into ConfigErrors.

    Messages that start with a field name are attributed to that field.
    """
    try:
        obj = factory(**kwargs)
        if hasattr(obj, "validate"):
            obj.validate()
        return obj
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        head = re.split(r"[\s:\[]", msg, maxsplit=1)[0]
        key = f"{section}.{head}" if head in kwargs else section
        raise ConfigError(key, msg) from None


def build_cpg(config: dict) -> CpgParams:
    c = config["cpg"]
    n = c["n_segments"] + (2 if c["pectoral"] else 0)
    if c["n_segments"] not in (1, 3, 5):
        raise ConfigError("cpg.n_segments", "must be 1, 3 or 5")
    try:
        eps = np.broadcast_to(np.asarray(c["epsilon"], dtype=float), (n,)).copy()
    except ValueError:
        raise ConfigError("cpg.epsilon", f"needs 1 or {n} values") from None
    return _build(
        "cpg", CpgParams.preset, n_segments=c["n_segments"], pectoral=c["pectoral"],
        omega=c["omega"], epsilon=eps, b=c["b"], k=c["k"], theta=c["theta"],
        h=c["h"], j=c["j"], coupling=c["coupling"],
    )


def build_ribcage(config: dict) -> RibcageGeometry:
    return _build("ribcage", RibcageGeometry, **config["ribcage"])


def build_problem(config: dict, scenario: str | None = None) -> ScenarioProblem:
    p = config["plant"]
    constants = _build("plant.constants", PlantConstants, **p["constants"])
    spec = _build(
        "plant.scenario", ScenarioSpec, kind=scenario or p["scenario"], U=p["U"],
        flow_angle=p["flow_angle"], cylinder_diameter=p["cylinder_diameter"],
        lambda_torque=p["lambda_torque"], constants=constants,
    )
    body = dict(p["body"])
    n_seg = body.pop("n_segments")
    links = body.pop("link_lengths")
    if links is None:
        geom = _build("plant.body", BodyGeometry.preset, n_segments=n_seg, **body)
    else:
        geom = _build("plant.body", BodyGeometry, link_lengths=tuple(links), **body)
    bounds = p["bounds"]
    if len(bounds) != len(DESIGN_BOUNDS) or any(len(b) != 2 for b in bounds):
        raise ConfigError("plant.bounds", f"need {len(DESIGN_BOUNDS)} [lo, hi] pairs")
    return ScenarioProblem(spec, geom, tuple(tuple(float(v) for v in b) for b in bounds), float(p["k"]))


def build_ego(config: dict, dim: int, bounds, minimize: bool, seed: int, threads: int = 1) -> EgoConfig:
    e = dict(config["ego"])
    ga = _build("ego.ga", GAConfig, **e.pop("ga"))
    kriging = _build("ego.kriging", FitConfig, n_workers=max(1, threads), **e.pop("kriging"))
    e["surface_dims"] = tuple(e["surface_dims"])
    cfg = _build("ego", EgoConfig, dim=dim, bounds=bounds, ga=ga, kriging=kriging,
                 seed=seed, minimize=minimize, **e)
    i, j = cfg.surface_dims
    if dim > 1 and not 0 <= i < j < dim:
        raise ConfigError("ego.surface_dims", f"need 0 <= i < j < {dim}")
    return cfg
