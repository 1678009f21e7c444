"""Command-line entry point.

Subcommands: ``bank build``, ``run``, ``compare``, ``sweep``, ``metrics``.
Failures exit nonzero and print one JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import MODES, RunConfig, load_config, save_config, validate
from .errors import ConfigError, RHSError, ValidationError
from .patterns import save_bank
from .pipeline import (CycleError, metrics_from_outputs, optimized_bank,
                       rhs_geometry, run_comparison, run_slam, scan_grid, sweep, with_changes)


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as a JSON record like every other failure."""

    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": f"{self.prog}: {message}"}),
              file=sys.stderr)
        sys.exit(2)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", type=Path, help="output directory (overrides config)")
    p.add_argument("--mode", choices=MODES, help="beamforming mode (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rhsslam")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    bank = sub.add_parser("bank", help="pattern bank tools")
    bank_sub = bank.add_subparsers(dest="bank_command", required=True)
    _common(bank_sub.add_parser("build", help="optimize and save the pattern bank"))

    _common(sub.add_parser("run", help="run one SLAM simulation"))

    cmp_ = sub.add_parser("compare", help="compare beamforming modes over seeds")
    _common(cmp_)
    cmp_.add_argument("--seeds", type=int, default=20, help="number of seeds")
    cmp_.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))

    sw = sub.add_parser("sweep", help="point-cloud RMSE over element counts and scan steps")
    _common(sw)
    sw.add_argument("--seeds", type=int, default=20)
    sw.add_argument("--elements", type=int, nargs="+", default=[20, 60])
    sw.add_argument("--steps", type=float, nargs="+", default=[1.0, 5.0])
    sw.add_argument("--cycle-stride", type=int, default=5)

    met = sub.add_parser("metrics", help="recompute metrics from a run directory")
    _common(met)
    met.add_argument("run_dir", nargs="?", type=Path)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = str(args.out)
    if args.mode is not None:
        changes["mode"] = args.mode
    return validate(with_changes(cfg, **changes))


def _seeds(cfg: RunConfig, n: int) -> list:
    if n < 1:
        raise ValidationError("seeds", "must be at least 1")
    return list(range(cfg.seed, cfg.seed + n))


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        if args.command == "bank":
            if cfg.mode != "rhs-optimized":
                raise ValidationError("mode", "only the optimized mode has a bank to build")
            bank = optimized_bank(cfg)
            geom = rhs_geometry(cfg)
            save_bank(out / "bank.json", bank, scan_grid(cfg), geom, geom)
            print(json.dumps({"bank": str(out / "bank.json"), "slots": len(bank),
                              "min_margin": min(r.margin for r in bank)}))
        elif args.command == "run":
            rep = run_slam(cfg, out)
            save_config(cfg, out / "config.json")
            print(json.dumps({k: rep[k] for k in ("trajectory_rmse", "landmark_rmse",
                                                 "cloud_rmse", "obstacles_found")}))
        elif args.command == "compare":
            doc = run_comparison(cfg, args.modes, _seeds(cfg, args.seeds))
            _write_json(out / "comparison.json", doc)
            print(json.dumps({m: v["mean_trajectory_rmse"] for m, v in doc["modes"].items()}))
        elif args.command == "sweep":
            cycles = range(0, cfg.scenario.cycles, max(1, args.cycle_stride))
            rows = sweep(cfg, args.elements, args.steps, _seeds(cfg, args.seeds), cycles)
            _write_json(out / "sweep.json", rows)
            for r in rows:
                print(json.dumps({k: r[k] for k in ("elements", "step_deg", "mean")}))
        elif args.command == "metrics":
            print(json.dumps(metrics_from_outputs(args.run_dir or out), sort_keys=True))
    except (RHSError, OSError, ValueError) as exc:
        rec = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ValidationError):
            rec["field"] = exc.field
        if isinstance(exc, CycleError):
            rec["cycle"] = exc.cycle
            rec["cause"] = type(exc.cause).__name__
        print(json.dumps(rec), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
