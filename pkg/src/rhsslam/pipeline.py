"""Sense, build point clouds, localize and map, cycle after cycle.

Also hosts the metrics and the batch drivers used by the CLI and scripts.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aperture import (SPEED_OF_LIGHT, ApertureGeometry, Beam, PhaseOnlyPattern,
                       conjugate_phases, phased_element_count)
from .config import RunConfig
from .errors import LengthMismatch, RHSError
from .patterns import ScanGrid, build_pattern_bank, load_bank, random_pattern_bank
from .pointcloud import (PointCloud, build_dictionary, radar_point_cloud, write_clouds)
from .scene import (Obstacle, Scenario, make_fmcw, rot, synthesize_radar,
                    trajectory_from_waypoints, wrap_angle)
from .slam import RBPF

log = logging.getLogger(__name__)

REPORT_SCHEMA = "rhsslam.report/1"
TRAJECTORY_HEADER = ["cycle", "x_m", "y_m", "heading_rad", "x_true", "y_true", "heading_true"]
MAP_HEADER = ["landmark_id", "x_m", "y_m", "cov_xx", "cov_xy", "cov_yy", "hits"]
FOUND_RADIUS = 2.0
CLOUD_ERROR_CAP = 10.0


class CycleError(RHSError):
    """A module error re-raised with the cycle it happened in."""

    def __init__(self, cycle: int, cause: Exception):
        self.cycle = cycle
        self.cause = cause
        super().__init__(f"cycle {cycle}: {type(cause).__name__}: {cause}")


def compute_rmse(estimates, truth) -> float:
    """Root mean squared Euclidean distance between paired rows."""
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise LengthMismatch(f"estimates {e.shape} vs truth {t.shape}")
    if e.size == 0:
        return 0.0
    d2 = np.sum((e - t) ** 2, axis=-1) if e.ndim > 1 else (e - t) ** 2
    return float(np.sqrt(np.mean(d2)))


def nearest_errors(points, truth, cap: float = np.inf) -> np.ndarray:
    """Distance from each truth row to its nearest point, capped at ``cap``."""
    t = np.asarray(truth, dtype=float).reshape(-1, 2)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(p) == 0:
        return np.full(len(t), cap)
    d = np.linalg.norm(t[:, None, :] - p[None, :, :], axis=-1).min(axis=1)
    return np.minimum(d, cap)


def cloud_rmse(points, truth, cap: float = CLOUD_ERROR_CAP) -> float:
    """Point-cloud error against the true obstacle positions.

    Every true obstacle contributes its distance to the nearest point and
    every point its distance to the nearest obstacle, each capped at ``cap``,
    so missed obstacles and spurious points both cost.
    """
    t = np.asarray(truth, dtype=float).reshape(-1, 2)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(t) == 0 and len(p) == 0:
        return 0.0
    errs = np.concatenate([nearest_errors(p, t, cap), nearest_errors(t, p, cap)])
    return float(np.sqrt(np.mean(errs ** 2)))


def rhs_geometry(cfg: RunConfig) -> ApertureGeometry:
    lam = SPEED_OF_LIGHT / cfg.waveform.center_frequency
    return ApertureGeometry.uniform_linear(cfg.aperture.elements, lam,
                                           cfg.aperture.spacing_wavelengths * lam,
                                           cfg.aperture.surface_index)


def phased_geometry(cfg: RunConfig) -> ApertureGeometry:
    lam = SPEED_OF_LIGHT / cfg.waveform.center_frequency
    n = phased_element_count(cfg.aperture.elements, cfg.aperture.cost_ratio)
    return ApertureGeometry.uniform_linear(n, lam, cfg.aperture.phased_spacing_wavelengths * lam)


def scan_grid(cfg: RunConfig) -> ScanGrid:
    return ScanGrid(cfg.grid.step_deg, cfg.grid.sector_deg)


def bank_key(cfg: RunConfig) -> str:
    """Cache key over everything the optimized bank depends on."""
    doc = {
        "geometry": rhs_geometry(cfg).digest(),
        "grid": dataclasses.asdict(scan_grid(cfg)),
        "solver": dataclasses.asdict(cfg.solver),
        "power": [cfg.power.tx_power, cfg.power.sigma],
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def optimized_bank(cfg: RunConfig, cache_dir=None) -> list:
    """Load the optimized bank from the cache, building it on a miss."""
    geom = rhs_geometry(cfg)
    grid = scan_grid(cfg)
    cache = Path(cache_dir if cache_dir is not None else cfg.bank_cache)
    path = cache / f"bank_{bank_key(cfg)}.json"
    if path.exists():
        try:
            bank = load_bank(path, geom, geom)
            if len(bank) == grid.slot_count:
                return bank
        except (ValueError, KeyError, json.JSONDecodeError):
            log.warning("discarding unreadable bank %s", path)
    log.info("building pattern bank %s (%d slots)", path.name, grid.slot_count)
    return build_pattern_bank(grid, cfg.solver, geom, geom, cfg.power.tx_power,
                              cfg.power.sigma, path)


def make_beams(cfg: RunConfig, cache_dir=None) -> list:
    """One beam per scan slot for the configured mode."""
    grid = scan_grid(cfg)
    if cfg.mode == "phased-array":
        geom = phased_geometry(cfg)
        out = []
        for i, c in enumerate(grid.centers()):
            pat = PhaseOnlyPattern(conjugate_phases(geom, c))
            out.append(Beam.phased(pat, pat, geom, cfg.power.tx_power, i))
        return out
    geom = rhs_geometry(cfg)
    if cfg.mode == "rhs-random":
        bank = random_pattern_bank(grid, geom, geom, cfg.power.tx_power, cfg.power.sigma, cfg.seed)
    else:
        bank = optimized_bank(cfg, cache_dir)
    return [Beam.holographic(r.pattern_tx, r.pattern_rx, geom, geom, i) for i, r in enumerate(bank)]


def build_scenario(cfg: RunConfig) -> Scenario:
    sc = cfg.scenario
    obstacles = [Obstacle(o[:2], o[2] if len(o) == 3 else sc.reflectivity) for o in sc.obstacles]
    wf = cfg.waveform
    waveform = make_fmcw(wf.center_frequency, wf.bandwidth, wf.chirp_duration, wf.sample_rate)
    poses = trajectory_from_waypoints(sc.waypoints, sc.cycles)
    return Scenario(obstacles, poses, waveform, scan_grid(cfg), cfg.power.sigma,
                    cfg.power.tx_power, sc.max_range)


def truth_in_vehicle(scenario: Scenario, cycle: int) -> np.ndarray:
    x, y, h = scenario.poses[cycle]
    pts = np.array([o.position for o in scenario.obstacles]).reshape(-1, 2)
    return (pts - [x, y]) @ rot(h)


class Sensor:
    """Turns a cycle index into the vehicle's point cloud for that cycle."""

    def __init__(self, cfg: RunConfig, beams: list | None = None, cache_dir=None):
        self.cfg = cfg
        self.scenario = build_scenario(cfg)
        self.beams = beams if beams is not None else make_beams(cfg, cache_dir)
        grid = self.scenario.grid
        self.dictionary = build_dictionary(self.beams, grid.dictionary_directions())
        self.max_delay = 2 * self.scenario.max_range / SPEED_OF_LIGHT

    def signals(self, cycle: int, radar: int, seed: int) -> np.ndarray:
        return synthesize_radar(self.scenario, cycle, radar, self.beams, seed)

    def cloud(self, cycle: int, seed: int) -> PointCloud:
        sc = self.scenario
        parts = [radar_point_cloud(self.signals(cycle, k, seed), self.beams, self.dictionary,
                                   sc.waveform, sc.sigma, self.cfg.detection, sc.grid.step,
                                   self.max_delay, cycle, k)
                 for k in range(len(sc.mounts))]
        return PointCloud.concat(parts, cycle)


def _fmt(v: float) -> str:
    return repr(float(v))


def run_slam(cfg: RunConfig, out=None, beams: list | None = None, cache_dir=None) -> dict:
    """Run every cycle and return the report; write artifacts when ``out`` is set.

    Artifacts: ``trajectory.csv``, ``map.csv``, ``clouds.csv``, ``report.json``
    and ``timing.json``. Wall-clock time lives only in ``timing.json`` so that
    the other files are reproducible byte for byte.
    """
    t0 = time.perf_counter()
    sensor = Sensor(cfg, beams, cache_dir)
    sc = sensor.scenario
    filt = RBPF(sc.poses[0], cfg.slam, cfg.seed)
    truth_world = np.array([o.position for o in sc.obstacles]).reshape(-1, 2)
    est, clouds, cycles = [], [], []
    landmarks = []
    for z in range(sc.cycles):
        try:
            pc = sensor.cloud(z, cfg.seed)
            pose, landmarks = filt.step(pc.cartesian(sc.mounts), pc.amplitudes, z)
        except RHSError as exc:
            raise CycleError(z, exc) from exc
        est.append(pose)
        clouds.append(pc)
        lm_xy = np.array([l.mean for l in landmarks]).reshape(-1, 2)
        cycles.append({
            "cycle": z,
            "pose_error": float(np.hypot(*(pose[:2] - sc.poses[z, :2]))),
            "landmark_rmse": float(np.sqrt(np.mean(nearest_errors(lm_xy, truth_world, CLOUD_ERROR_CAP) ** 2)))
            if len(truth_world) else 0.0,
            "cloud_rmse": cloud_rmse(pc.cartesian(sc.mounts), truth_in_vehicle(sc, z)),
            "points": len(pc),
            "landmarks": len(landmarks),
        })
    est = np.array(est)
    lm_xy = np.array([l.mean for l in landmarks]).reshape(-1, 2)
    found = nearest_errors(lm_xy, truth_world) <= FOUND_RADIUS
    report = {
        "schema": REPORT_SCHEMA,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "trajectory_rmse": compute_rmse(est[:, :2], sc.poses[:, :2]),
        "heading_rmse": float(np.sqrt(np.mean(wrap_angle(est[:, 2] - sc.poses[:, 2]) ** 2))),
        "landmark_rmse": cycles[-1]["landmark_rmse"],
        "cloud_rmse": float(np.sqrt(np.mean([c["cloud_rmse"] ** 2 for c in cycles]))),
        "obstacles_found": int(found.sum()),
        "obstacles": int(len(truth_world)),
        "cycles": cycles,
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("out", "bank_cache")},
    }
    if out is not None:
        write_outputs(Path(out), report, est, sc.poses, landmarks, clouds,
                      time.perf_counter() - t0)
    return report


def write_outputs(out: Path, report: dict, est, truth, landmarks, clouds, wall: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for z, (e, t) in enumerate(zip(est, truth)):
            w.writerow([z] + [_fmt(v) for v in e] + [_fmt(v) for v in t])
    with open(out / "map.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MAP_HEADER)
        for l in landmarks:
            w.writerow([l.id, _fmt(l.mean[0]), _fmt(l.mean[1]), _fmt(l.cov[0, 0]),
                        _fmt(l.cov[0, 1]), _fmt(l.cov[1, 1]), _fmt(l.hits)])
    write_clouds(out / "clouds.csv", clouds)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"wall_clock_s": wall}) + "\n")


def with_changes(cfg: RunConfig, **changes) -> RunConfig:
    """Copy of ``cfg`` with dotted-path fields replaced, e.g. ``grid__step_deg=5``."""
    cfg = dataclasses.replace(cfg)
    for key, value in changes.items():
        parts = key.split("__")
        node = cfg
        chain = [cfg]
        for p in parts[:-1]:
            node = getattr(node, p)
            chain.append(node)
        leaf = dataclasses.replace(chain[-1], **{parts[-1]: value})
        for parent, name in zip(reversed(chain[:-1]), reversed(parts[:-1])):
            leaf = dataclasses.replace(parent, **{name: leaf})
        cfg = leaf if len(parts) > 1 else dataclasses.replace(cfg, **{parts[0]: value})
    return cfg


def run_comparison(cfg: RunConfig, modes, seeds, cache_dir=None) -> dict:
    """Trajectory, landmark and cloud RMSE for each mode over a seed batch.

    All modes share the scenario. Optimized beams are built once; the random
    bank is redrawn per seed.
    """
    out = {"schema": REPORT_SCHEMA, "seeds": list(seeds), "modes": {}}
    for mode in modes:
        mcfg = with_changes(cfg, mode=mode)
        shared = make_beams(mcfg, cache_dir) if mode != "rhs-random" else None
        rows = []
        for s in seeds:
            rep = run_slam(with_changes(mcfg, seed=int(s)), beams=shared, cache_dir=cache_dir)
            rows.append({k: rep[k] for k in ("seed", "trajectory_rmse", "landmark_rmse",
                                             "cloud_rmse", "obstacles_found")})
        out["modes"][mode] = {
            "runs": rows,
            "mean_trajectory_rmse": float(np.mean([r["trajectory_rmse"] for r in rows])),
            "mean_cloud_rmse": float(np.mean([r["cloud_rmse"] for r in rows])),
            "found_fraction": float(np.mean([r["obstacles_found"] == rep["obstacles"] for r in rows])),
        }
    return out


def cloud_experiment(cfg: RunConfig, seeds, cycles=None, beams: list | None = None,
                     cache_dir=None) -> dict:
    """Point-cloud RMSE only (no SLAM) over seeds and a subset of cycles."""
    sensor = Sensor(cfg, beams, cache_dir)
    sc = sensor.scenario
    cycles = range(sc.cycles) if cycles is None else cycles
    per_seed = []
    for s in seeds:
        errs = [cloud_rmse(sensor.cloud(z, int(s)).cartesian(sc.mounts), truth_in_vehicle(sc, z))
                for z in cycles]
        per_seed.append(float(np.sqrt(np.mean(np.square(errs)))))
    return {"elements": cfg.aperture.elements, "step_deg": cfg.grid.step_deg, "mode": cfg.mode,
            "per_seed": per_seed, "mean": float(np.mean(per_seed))}


def sweep(cfg: RunConfig, elements, steps, seeds, cycles=None, cache_dir=None) -> list:
    """Point-cloud RMSE over the grid of element counts and scan steps."""
    rows = []
    for m in elements:
        for step in steps:
            c = with_changes(cfg, aperture__elements=int(m), grid__step_deg=float(step))
            rows.append(cloud_experiment(c, seeds, cycles, cache_dir=cache_dir))
    return rows


def metrics_from_outputs(out) -> dict:
    """Recompute RMSEs from the CSV artifacts of a finished run."""
    out = Path(out)
    with open(out / "trajectory.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    est = np.array([[float(r["x_m"]), float(r["y_m"])] for r in rows])
    tru = np.array([[float(r["x_true"]), float(r["y_true"])] for r in rows])
    result = {"cycles": len(rows), "trajectory_rmse": compute_rmse(est, tru)}
    rep_path = out / "report.json"
    if rep_path.exists():
        rep = json.loads(rep_path.read_text())
        truth = np.array([o[:2] for o in rep["config"]["scenario"]["obstacles"]]).reshape(-1, 2)
        with open(out / "map.csv", newline="") as fh:
            lm = np.array([[float(r["x_m"]), float(r["y_m"])] for r in csv.DictReader(fh)]).reshape(-1, 2)
        errs = nearest_errors(lm, truth)
        result["obstacles_found"] = int(np.sum(errs <= FOUND_RADIUS))
        result["obstacles"] = int(len(truth))
    return result
