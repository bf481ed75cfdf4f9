"""Sweep the gait frequency in the cylinder-wake scenario and locate the power minimum.

    python3 scripts/s3_frequency_sweep.py --points 241 --csv runs/s3_sweep.csv
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from spinewave_lab.hydro import DESIGN_BOUNDS, ScenarioProblem, ScenarioSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=241)
    ap.add_argument("--U", type=float, default=0.3, help="free-stream speed, m/s")
    ap.add_argument("--diameter", type=float, default=0.08, help="cylinder diameter, m")
    ap.add_argument("--csv", type=Path)
    args = ap.parse_args()

    spec = ScenarioSpec("S3_vortex", U=args.U, cylinder_diameter=args.diameter)
    problem = ScenarioProblem(spec)
    x = np.array([0.5 * (lo + hi) for lo, hi in DESIGN_BOUNDS])
    rows = []
    for omega in np.linspace(*DESIGN_BOUNDS[0], args.points):
        x[0] = omega
        value, m = problem(x)
        rows.append((m["f"], m["A_pp"], m["power"], value))
    rows.sort()
    f, _, power, _ = map(np.array, zip(*rows))
    i = int(np.argmin(power))
    print(f"shedding frequency {spec.shedding_frequency:.4f} Hz")
    print(f"power-optimal gait {f[i]:.4f} Hz ({(f[i] / spec.shedding_frequency - 1):+.2%})")
    if args.csv:
        args.csv.parent.mkdir(parents=True, exist_ok=True)
        with args.csv.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["f_hz", "A_pp_m", "power", "objective"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
