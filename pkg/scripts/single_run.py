"""One SLAM run; prints the estimated map next to the true obstacles.

    python3 scripts/single_run.py --seed 0 --out out/run
"""

import argparse
from pathlib import Path

import numpy as np

from rhsslam.config import MODES, RunConfig, load_config
from rhsslam.pipeline import run_slam, with_changes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", choices=MODES, default="rhs-optimized")
    ap.add_argument("--out", type=Path, default=Path("out/run"))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = with_changes(cfg, seed=args.seed, mode=args.mode)
    rep = run_slam(cfg, args.out)
    rows = np.loadtxt(args.out / "map.csv", delimiter=",", skiprows=1, ndmin=2)
    print(f"trajectory RMSE {rep['trajectory_rmse']:.3f} m, "
          f"{rep['obstacles_found']}/{rep['obstacles']} obstacles found")
    for x, y, *_ in cfg.scenario.obstacles:
        if len(rows):
            d = np.hypot(rows[:, 1] - x, rows[:, 2] - y)
            k = int(np.argmin(d))
            print(f"obstacle ({x:5.1f}, {y:5.1f})  landmark ({rows[k, 1]:6.2f}, {rows[k, 2]:6.2f})"
                  f"  error {d[k]:.2f} m")
        else:
            print(f"obstacle ({x:5.1f}, {y:5.1f})  no landmark")
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
