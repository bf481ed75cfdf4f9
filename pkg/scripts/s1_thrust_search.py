"""EGO on the thrust scenario over the 7-parameter gait design.

    python3 scripts/s1_thrust_search.py --seed 3 --out runs/s1
"""

import argparse
import json
from pathlib import Path

from spinewave_lab.ego import EgoConfig, EvaluationDatabase, run_ego
from spinewave_lab.experiment import export_surface_grid
from spinewave_lab.hydro import DESIGN_BOUNDS, DESIGN_NAMES, BodyGeometry, ScenarioProblem, ScenarioSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/s1_thrust"))
    ap.add_argument("--segments", type=int, choices=(1, 3, 5), default=5)
    args = ap.parse_args()

    problem = ScenarioProblem(ScenarioSpec("S1_thrust"), BodyGeometry.preset(args.segments))
    cfg = EgoConfig(dim=problem.dim, bounds=list(DESIGN_BOUNDS), seed=args.seed, minimize=False)
    args.out.mkdir(parents=True, exist_ok=True)
    db_path = args.out / "database.jsonl"
    db_path.write_text("")
    res = run_ego(problem, cfg, EvaluationDatabase(db_path))
    res.write_history(args.out / "history.csv")
    export_surface_grid(res.model, args.out / "surface.csv", incumbent=cfg.to_unit(res.best_x), negate=True)

    _, metrics = problem(res.best_x)
    best = dict(zip(DESIGN_NAMES, res.best_x.tolist()))
    print(json.dumps({"best_C_T": res.best_y, "design": best, "metrics": metrics}, indent=2))


if __name__ == "__main__":
    main()
