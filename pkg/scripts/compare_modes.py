"""Trajectory RMSE of the three beamforming modes over a seed batch.

    python3 scripts/compare_modes.py --seeds 20 --out out/compare
"""

import argparse
import json
from pathlib import Path

from rhsslam.config import MODES, RunConfig, load_config
from rhsslam.pipeline import run_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--out", type=Path, default=Path("out/compare"))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()
    doc = run_comparison(cfg, MODES, range(cfg.seed, cfg.seed + args.seeds), cfg.bank_cache)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "comparison.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    print(f"{'mode':<15}{'trajectory':>12}{'cloud':>10}{'all found':>11}")
    for mode, v in doc["modes"].items():
        print(f"{mode:<15}{v['mean_trajectory_rmse']:>12.3f}{v['mean_cloud_rmse']:>10.3f}"
              f"{v['found_fraction']:>11.0%}")


if __name__ == "__main__":
    main()
