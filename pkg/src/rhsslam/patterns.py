"""Offline max-min side-lobe optimization of holographic Tx/Rx patterns.

The coupled problem (maximize the worst SNR gap between the main-lobe
direction and every side-lobe direction, subject to a Tx power equality and
[0, 1] amplitude boxes) is split into a transmit subproblem with the receive
pattern fixed and a receive subproblem with the transmit pattern fixed. The
two are solved alternately, each warm-started from the incumbent and only
allowed to improve it, so the recorded margin never decreases.

Both subproblems are solved by projected gradient ascent on a log-sum-exp
soft minimum whose temperature is annealed toward zero.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aperture import ApertureGeometry, HolographicPattern, feed_phase_vector, steering_vector
from .errors import InfeasiblePower, ZeroReceivePattern

log = logging.getLogger(__name__)

DELTA_MAX = 1e12
BANK_SCHEMA = "rhsslam.pattern_bank/1"


@dataclass
class SlotSpec:
    """Optimization target for one scan slot.

    ``sidelobes`` may be empty, in which case the margin is the sentinel
    ``DELTA_MAX`` and the optimizer only maximizes the main-lobe SNR.
    """

    slot_index: int
    main_direction: float
    sidelobes: np.ndarray
    power: float
    sigma: float

    def __post_init__(self):
        self.sidelobes = np.asarray(self.sidelobes, dtype=float).reshape(-1)
        if self.power <= 0:
            raise ValueError("power must be positive")
        if np.any(np.isclose(self.sidelobes, self.main_direction, rtol=0, atol=1e-12)):
            raise ValueError("main direction must not be a side-lobe direction")

    @property
    def directions(self) -> np.ndarray:
        return np.concatenate([[self.main_direction], self.sidelobes])


@dataclass
class SolverConfig:
    """Knobs of the alternating solver.

    ``threshold`` is the stopping tolerance on the change of the margin
    between two outer iterations, relative to ``max(1, |margin|)``.
    """

    threshold: float = 1e-4
    max_outer: int = 12
    inner_iters: int = 30
    temperatures: int = 6
    tau_start: float = 3e-2
    tau_end: float = 1e-5
    step: float = 0.2
    restarts: int = 2
    inner_starts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass
class OptimizationResult:
    pattern_tx: HolographicPattern
    pattern_rx: HolographicPattern
    margin: float
    iterations: int
    delta_history: list = field(default_factory=list)


class _SlotModel:
    """Direction responses ``b(theta) = a(theta) * q`` for one slot."""

    def __init__(self, spec: SlotSpec, geom_tx: ApertureGeometry, geom_rx: ApertureGeometry):
        dirs = spec.directions
        self.spec = spec
        self.b_tx = steering_vector(geom_tx, dirs) * feed_phase_vector(geom_tx)
        self.b_rx = steering_vector(geom_rx, dirs) * feed_phase_vector(geom_rx)
        self.m_tx = geom_tx.element_count
        self.m_rx = geom_rx.element_count

    def snr(self, psi_tx, psi_rx):
        denom = np.sum(psi_rx ** 2) * self.spec.sigma ** 2
        if denom <= 0:
            raise ZeroReceivePattern("receive pattern is identically zero")
        g_tx = self.b_tx @ psi_tx
        g_rx = self.b_rx @ psi_rx
        return np.abs(g_tx) ** 2 * np.abs(g_rx) ** 2 / denom

    def margin(self, psi_tx, psi_rx) -> float:
        if self.spec.sidelobes.size == 0:
            self.snr(psi_tx, psi_rx)
            return DELTA_MAX
        g = self.snr(psi_tx, psi_rx)
        return float(g[0] - g[1:].max())


def margin(pattern_tx: HolographicPattern, pattern_rx: HolographicPattern, spec: SlotSpec,
           geom_tx: ApertureGeometry, geom_rx: ApertureGeometry) -> float:
    """Worst-case SNR gap between the main lobe and every side-lobe direction."""
    return _SlotModel(spec, geom_tx, geom_rx).margin(pattern_tx.psi, pattern_rx.psi)


def power_shell(v: np.ndarray, power: float) -> np.ndarray:
    """Map ``v`` onto ``{psi in [0,1]^M : sum psi^2 = power}``.

    Negative entries are clipped, then a common scale ``lam`` is chosen so
    that ``min(lam * v, 1)`` meets the power exactly. The scale is found in
    closed form by walking the saturation breakpoints.
    """
    v = np.clip(np.asarray(v, dtype=float), 0, None)
    m = v.size
    if power <= 0 or power > m * (1 + 1e-12):
        raise InfeasiblePower(f"power {power} not reachable with {m} elements in [0, 1]")
    if power >= m * (1 - 1e-12):
        return np.ones(m)
    v = v / v.max() if v.max() > 0 else np.ones(m)
    if np.count_nonzero(v > 1e-100) <= power:
        v = v + 1e-3
    vals = np.sort(v)[::-1]
    tail = np.cumsum((vals ** 2)[::-1])[::-1]   # tail[k] = sum_{j >= k} vals_j^2
    for k in range(m):
        need = power - k
        if need <= 0 or tail[k] <= 0:
            break
        lam = np.sqrt(need / tail[k])
        if lam * vals[k] <= 1 and (k == 0 or lam * vals[k - 1] >= 1):
            return np.minimum(lam * v, 1.0)
    raise InfeasiblePower("no scale meets the power equality")  # pragma: no cover


def _unit_sphere(v: np.ndarray) -> np.ndarray:
    v = np.clip(v, 0, None)
    n = np.linalg.norm(v)
    if n == 0:
        return np.full(v.size, 1 / np.sqrt(v.size))
    return v / n


def holographic_init(geometry: ApertureGeometry, direction: float) -> np.ndarray:
    """Classic holographic amplitude profile ``(1 + cos(arg b_m)) / 2``."""
    b = steering_vector(geometry, direction) * feed_phase_vector(geometry)
    return (1 + np.cos(np.angle(b))) / 2


def _softmin(d: np.ndarray, tau: float):
    lo = d.min()
    w = np.exp(-(d - lo) / tau)
    s = w.sum()
    return lo - tau * np.log(s), w / s


def _ascend(x0, objective, project, cfg: SolverConfig):
    """Annealed projected gradient ascent; returns the best iterate seen.

    ``objective(x)`` returns the normalized gaps ``d`` (first entry is not
    special) and their gradients ``grad_d`` with shape (L, M).
    """
    x = x0
    d, gd = objective(x)
    best_x, best_val = x, d.min()
    step = cfg.step
    for tau in np.geomspace(cfg.tau_start, cfg.tau_end, cfg.temperatures):
        f, w = _softmin(d, tau)
        for _ in range(cfg.inner_iters):
            g = w @ gd
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            moved = False
            while step > 1e-7:
                xn = project(x + step * g / gn)
                dn, gdn = objective(xn)
                fn, wn = _softmin(dn, tau)
                if fn > f:
                    moved = True
                    break
                step *= 0.5
            if not moved:
                step = cfg.step
                break
            x, d, gd, f, w = xn, dn, gdn, fn, wn
            step = min(step * 1.5, 1.0)
            if d.min() > best_val:
                best_x, best_val = x, d.min()
    return best_x, best_val


def _tx_objective(model: _SlotModel, psi_rx: np.ndarray):
    spec = model.spec
    g_rx = model.b_rx @ psi_rx
    c = np.abs(g_rx) ** 2 / (np.sum(psi_rx ** 2) * spec.sigma ** 2)
    scale = max(c[0], c.max() * 1e-6, 1e-300) * spec.power * model.m_tx
    b = model.b_tx

    def objective(psi):
        g = b @ psi
        p = np.abs(g) ** 2
        grad = 2 * np.real(np.conj(g)[:, None] * b)
        if spec.sidelobes.size == 0:
            return np.array([c[0] * p[0] / scale]), (c[0] * grad[0] / scale)[None, :]
        d = (c[0] * p[0] - c[1:] * p[1:]) / scale
        gd = (c[0] * grad[0][None, :] - c[1:, None] * grad[1:]) / scale
        return d, gd

    return objective


def _rx_objective(model: _SlotModel, psi_tx: np.ndarray):
    spec = model.spec
    t = np.abs(model.b_tx @ psi_tx) ** 2
    scale = max(t[0], t.max() * 1e-6, 1e-300) * model.m_rx
    b = model.b_rx

    # on the unit sphere; the 1/sigma^2 of the P4 normalization is a constant factor
    def objective(v):
        g = b @ v
        p = np.abs(g) ** 2
        grad = 2 * np.real(np.conj(g)[:, None] * b)
        if spec.sidelobes.size == 0:
            return np.array([t[0] * p[0] / scale]), (t[0] * grad[0] / scale)[None, :]
        d = (t[0] * p[0] - t[1:] * p[1:]) / scale
        gd = (t[0] * grad[0][None, :] - t[1:, None] * grad[1:]) / scale
        return d, gd

    return objective


def _pick(model: _SlotModel, candidates, psi_fixed, role: str):
    best, best_m = None, -np.inf
    for psi in candidates:
        try:
            if role == "tx":
                m = model.margin(psi, psi_fixed)
                if model.spec.sidelobes.size == 0:
                    m = model.snr(psi, psi_fixed)[0]
            else:
                m = model.margin(psi_fixed, psi)
                if model.spec.sidelobes.size == 0:
                    m = model.snr(psi_fixed, psi)[0]
        except ZeroReceivePattern:
            continue
        if m > best_m:
            best, best_m = psi, m
    return best, best_m


def optimize_transmit(spec: SlotSpec, pattern_rx: HolographicPattern,
                      warm_start: HolographicPattern, config: SolverConfig,
                      geom_tx: ApertureGeometry, geom_rx: ApertureGeometry,
                      rng: np.random.Generator | None = None) -> HolographicPattern:
    """Best Tx pattern for a fixed Rx pattern; never worse than ``warm_start``.

    Raises
    ------
    InfeasiblePower
        If the power cannot be radiated by amplitudes in [0, 1].
    """
    model = _SlotModel(spec, geom_tx, geom_rx)
    if spec.power > geom_tx.element_count:
        raise InfeasiblePower(f"power {spec.power} exceeds element count {geom_tx.element_count}")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    objective = _tx_objective(model, pattern_rx.psi)
    project = lambda v: power_shell(v, spec.power)  # noqa: E731
    starts = [power_shell(warm_start.psi, spec.power)]
    starts += [power_shell(rng.uniform(size=geom_tx.element_count), spec.power)
               for _ in range(config.inner_starts)]
    finals = [_ascend(x0, objective, project, config)[0] for x0 in starts]
    best, _ = _pick(model, [warm_start.psi] + finals, pattern_rx.psi, "tx")
    return HolographicPattern(best, "tx", spec.slot_index)


def optimize_receive(spec: SlotSpec, pattern_tx: HolographicPattern,
                     warm_start: HolographicPattern, config: SolverConfig,
                     geom_tx: ApertureGeometry, geom_rx: ApertureGeometry,
                     rng: np.random.Generator | None = None) -> HolographicPattern:
    """Best Rx pattern for a fixed Tx pattern; never worse than ``warm_start``.

    The search runs under the unit-noise normalization ``||Psi_R q||^2
    sigma^2 = 1`` (equivalently the unit sphere, since the SNR does not
    depend on the scale of the receive pattern) and the result is rescaled
    by the largest factor that keeps every amplitude inside [0, 1].
    """
    model = _SlotModel(spec, geom_tx, geom_rx)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    objective = _rx_objective(model, pattern_tx.psi)
    starts = []
    if np.any(warm_start.psi > 0):
        starts.append(_unit_sphere(warm_start.psi))
    starts += [_unit_sphere(rng.uniform(size=geom_rx.element_count))
               for _ in range(config.inner_starts)]
    finals = []
    for x0 in starts:
        v, _ = _ascend(x0, objective, _unit_sphere, config)
        peak = v.max()
        if peak <= 0:
            continue
        finals.append(np.clip(v / peak, 0, 1))
    if not finals and not np.any(warm_start.psi > 0):
        raise ZeroReceivePattern("receive optimization collapsed to zero")
    best, _ = _pick(model, [warm_start.psi] + finals, pattern_tx.psi, "rx")
    if best is None:
        raise ZeroReceivePattern("receive optimization collapsed to zero")
    return HolographicPattern(best, "rx", spec.slot_index)


def random_feasible_pair(spec: SlotSpec, geom_tx: ApertureGeometry, geom_rx: ApertureGeometry,
                         rng: np.random.Generator):
    """Uniformly drawn amplitudes, Tx mapped onto the power shell."""
    tx = power_shell(rng.uniform(size=geom_tx.element_count), spec.power)
    rx = rng.uniform(size=geom_rx.element_count)
    return HolographicPattern(tx, "tx", spec.slot_index), HolographicPattern(rx, "rx", spec.slot_index)


def alternating_optimize(spec: SlotSpec, config: SolverConfig, geom_tx: ApertureGeometry,
                         geom_rx: ApertureGeometry) -> OptimizationResult:
    """Alternate Tx and Rx subproblems from several starts; keep the best run.

    The first start uses holographic profiles aimed at the main direction,
    the others draw the Rx pattern at random.
    """
    model = _SlotModel(spec, geom_tx, geom_rx)
    rng = np.random.default_rng([config.seed, spec.slot_index])
    best: OptimizationResult | None = None
    for run in range(max(config.restarts, 1)):
        if run == 0:
            psi_rx = holographic_init(geom_rx, spec.main_direction)
        else:
            psi_rx = rng.uniform(size=geom_rx.element_count)
        psi_tx = power_shell(holographic_init(geom_tx, spec.main_direction), spec.power)
        tx = HolographicPattern(psi_tx, "tx", spec.slot_index)
        rx = HolographicPattern(psi_rx, "rx", spec.slot_index)
        history = [model.margin(tx.psi, rx.psi)]
        it = 0
        for it in range(1, config.max_outer + 1):
            tx = optimize_transmit(spec, rx, tx, config, geom_tx, geom_rx, rng)
            rx = optimize_receive(spec, tx, rx, config, geom_tx, geom_rx, rng)
            history.append(model.margin(tx.psi, rx.psi))
            if abs(history[-1] - history[-2]) < config.threshold * max(1.0, abs(history[-1])):
                break
        result = OptimizationResult(tx, rx, history[-1], it, history)
        log.debug("slot %d run %d: margin %.4g after %d iterations",
                  spec.slot_index, run, result.margin, it)
        if best is None or result.margin > best.margin:
            best = result
    return best


@dataclass
class ScanGrid:
    """Angular scan grid of one radar sector.

    Slot centres sit at ``-sector/2 + (i + 0.5) * step``. Side lobes of a
    slot are every other slot centre farther than ``exclusion`` steps.
    """

    step_deg: float = 5.0
    sector_deg: float = 90.0
    exclusion_steps: float = 1.5
    oversample: int = 4

    def __post_init__(self):
        if self.step_deg <= 0 or self.sector_deg <= 0:
            raise ValueError("grid step and sector must be positive")
        ratio = self.sector_deg / self.step_deg
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("sector must be a whole number of grid steps")

    @property
    def slot_count(self) -> int:
        return int(round(self.sector_deg / self.step_deg))

    @property
    def step(self) -> float:
        return np.deg2rad(self.step_deg)

    def centers(self) -> np.ndarray:
        i = np.arange(self.slot_count)
        return np.deg2rad(-self.sector_deg / 2 + (i + 0.5) * self.step_deg)

    def dictionary_directions(self) -> np.ndarray:
        n = self.slot_count * self.oversample
        fine = self.step_deg / self.oversample
        return np.deg2rad(-self.sector_deg / 2 + (np.arange(n) + 0.5) * fine)

    def sidelobes(self, slot: int) -> np.ndarray:
        c = self.centers()
        far = np.abs(c - c[slot]) > self.exclusion_steps * self.step + 1e-12
        return c[far]

    def slot_spec(self, slot: int, power: float, sigma: float) -> SlotSpec:
        return SlotSpec(slot, float(self.centers()[slot]), self.sidelobes(slot), power, sigma)


def build_pattern_bank(grid: ScanGrid, config: SolverConfig, geom_tx: ApertureGeometry,
                       geom_rx: ApertureGeometry, power: float, sigma: float,
                       path: str | Path | None = None) -> list[OptimizationResult]:
    """Optimize one Tx/Rx pair per slot of ``grid``; optionally persist it."""
    if grid.slot_count < 1:
        raise ValueError("grid must contain at least one slot")
    bank = []
    for i in range(grid.slot_count):
        res = alternating_optimize(grid.slot_spec(i, power, sigma), config, geom_tx, geom_rx)
        log.info("slot %d/%d margin %.4g", i + 1, grid.slot_count, res.margin)
        bank.append(res)
    if path is not None:
        save_bank(path, bank, grid, geom_tx, geom_rx)
    return bank


def random_pattern_bank(grid: ScanGrid, geom_tx: ApertureGeometry, geom_rx: ApertureGeometry,
                        power: float, sigma: float, seed: int) -> list[OptimizationResult]:
    """Baseline bank of uniformly random feasible patterns, one per slot."""
    rng = np.random.default_rng([seed, 0x5EED])
    bank = []
    for i in range(grid.slot_count):
        spec = grid.slot_spec(i, power, sigma)
        tx, rx = random_feasible_pair(spec, geom_tx, geom_rx, rng)
        m = margin(tx, rx, spec, geom_tx, geom_rx)
        bank.append(OptimizationResult(tx, rx, m, 0, [m]))
    return bank


def save_bank(path, bank: list[OptimizationResult], grid: ScanGrid,
              geom_tx: ApertureGeometry, geom_rx: ApertureGeometry) -> None:
    centers = np.rad2deg(grid.centers())
    doc = {
        "schema": BANK_SCHEMA,
        "geometry_hash": geom_tx.digest() + geom_rx.digest(),
        "I": len(bank),
        "slots": [
            {"theta_deg": float(centers[i]),
             "psi_tx": r.pattern_tx.psi.tolist(),
             "psi_rx": r.pattern_rx.psi.tolist(),
             "delta": float(r.margin)}
            for i, r in enumerate(bank)
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1))


def load_bank(path, geom_tx: ApertureGeometry | None = None,
              geom_rx: ApertureGeometry | None = None) -> list[OptimizationResult]:
    """Read a bank written by :func:`save_bank`.

    When geometries are given, a hash mismatch raises ``ValueError``.
    """
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != BANK_SCHEMA:
        raise ValueError(f"unsupported bank schema {doc.get('schema')!r}")
    if geom_tx is not None and geom_rx is not None:
        if doc["geometry_hash"] != geom_tx.digest() + geom_rx.digest():
            raise ValueError("bank was built for a different geometry")
    bank = []
    for i, s in enumerate(doc["slots"]):
        tx = HolographicPattern(np.array(s["psi_tx"]), "tx", i)
        rx = HolographicPattern(np.array(s["psi_rx"]), "rx", i)
        bank.append(OptimizationResult(tx, rx, s["delta"], 0, [s["delta"]]))
    return bank
