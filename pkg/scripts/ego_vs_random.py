"""Paired comparison of EGO against uniform random search with the same budget.

    python3 scripts/ego_vs_random.py --scenario s1 --seeds 10
"""

import argparse

from spinewave_lab.ego import EgoConfig, random_search, run_ego
from spinewave_lab.hydro import DESIGN_BOUNDS, ScenarioProblem, ScenarioSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="s1", choices=["s1", "s2", "s3", "s4"])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    problem = ScenarioProblem(ScenarioSpec(args.scenario))
    wins = 0
    print(f"{'seed':>4} {'ego':>10} {'random':>10}")
    for seed in range(args.seeds):
        cfg = EgoConfig(dim=problem.dim, bounds=list(DESIGN_BOUNDS), seed=seed, minimize=problem.minimize)
        ego = run_ego(problem, cfg).best_y
        _, rand = random_search(problem, cfg, seed=seed)
        better = ego <= rand if problem.minimize else ego >= rand
        wins += better
        print(f"{seed:>4} {ego:>10.4f} {rand:>10.4f} {'*' if better else ''}")
    print(f"EGO at least as good in {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
