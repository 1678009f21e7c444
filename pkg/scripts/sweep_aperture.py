"""Point-cloud RMSE against element count and angular scan step.

    python3 scripts/sweep_aperture.py --elements 20 40 60 --steps 1 2 5
"""

import argparse
import json
from pathlib import Path

from rhsslam.config import RunConfig, load_config
from rhsslam.pipeline import sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--elements", type=int, nargs="+", default=[20, 60])
    ap.add_argument("--steps", type=float, nargs="+", default=[1.0, 5.0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--cycle-stride", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("out/sweep"))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()
    cycles = range(0, cfg.scenario.cycles, args.cycle_stride)
    rows = sweep(cfg, args.elements, args.steps, range(cfg.seed, cfg.seed + args.seeds), cycles,
                 cfg.bank_cache)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "sweep.json").write_text(json.dumps(rows, indent=1))
    steps = sorted({r["step_deg"] for r in rows})
    table = {(r["elements"], r["step_deg"]): r["mean"] for r in rows}
    print("M \\ step" + "".join(f"{s:>9g}" for s in steps))
    for m in sorted({r["elements"] for r in rows}):
        print(f"{m:<8}" + "".join(f"{table[(m, s)]:>9.3f}" for s in steps))


if __name__ == "__main__":
    main()
