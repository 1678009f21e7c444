"""Ground truth and synthetic echoes for the four-radar vehicle.

Frames: the world frame holds obstacles and the true trajectory. The vehicle
frame has x forward and y to the left. Radar ``k`` faces
``RADAR_MOUNTS[k]`` in the vehicle frame and measures azimuth from its own
boresight, counter-clockwise positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .aperture import SPEED_OF_LIGHT, Beam
from .errors import BadSampling
from .patterns import ScanGrid

RADAR_MOUNTS = (0.0, np.pi / 2, np.pi, 3 * np.pi / 2)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


def rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class Waveform:
    """Baseband linear FMCW chirp sweeping ``-B/2 -> +B/2`` over ``T_c``."""

    center_frequency: float
    bandwidth: float
    chirp_duration: float
    sample_rate: float

    @property
    def n_samples(self) -> int:
        return int(round(self.chirp_duration * self.sample_rate))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    @property
    def range_bin(self) -> float:
        return SPEED_OF_LIGHT / (2 * self.sample_rate)

    def evaluate(self, t) -> np.ndarray:
        """Continuous-time chirp at times ``t`` (zero outside ``[0, T_c)``)."""
        t = np.asarray(t, dtype=float)
        slope = self.bandwidth / self.chirp_duration
        phase = np.pi * slope * t ** 2 - np.pi * self.bandwidth * t
        inside = (t >= 0) & (t < self.chirp_duration)
        return np.where(inside, np.exp(1j * phase), 0)

    @cached_property
    def samples(self) -> np.ndarray:
        return self.evaluate(np.arange(self.n_samples) / self.sample_rate)

    @property
    def energy(self) -> float:
        return float(self.n_samples)


def make_fmcw(center_frequency: float, bandwidth: float, chirp_duration: float,
              sample_rate: float) -> Waveform:
    """Build a chirp; raises ``BadSampling`` when ``sample_rate < bandwidth``."""
    if sample_rate < bandwidth:
        raise BadSampling(f"sample rate {sample_rate:g} below bandwidth {bandwidth:g}")
    if chirp_duration <= 0 or sample_rate <= 0:
        raise BadSampling("chirp duration and sample rate must be positive")
    return Waveform(center_frequency, bandwidth, chirp_duration, sample_rate)


@dataclass
class Obstacle:
    position: np.ndarray
    reflectivity: complex = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        if abs(self.reflectivity) <= 0:
            raise ValueError("reflectivity must be nonzero")


def trajectory_from_waypoints(waypoints, cycles: int) -> np.ndarray:
    """Constant-speed poses ``(x, y, heading)`` along a polyline.

    Pose ``z`` sits at arc length ``z / (cycles - 1)`` of the path; heading is
    the direction of the segment containing it.
    """
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if len(wp) == 1:
        return np.tile([wp[0, 0], wp[0, 1], 0.0], (cycles, 1))
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0], np.cumsum(seg_len)])
    s = np.linspace(0, cum[-1], cycles) if cycles > 1 else np.zeros(1)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1)
    xy = wp[idx] + frac[:, None] * seg[idx]
    heading = np.arctan2(seg[idx, 1], seg[idx, 0])
    return np.column_stack([xy, heading])


@dataclass
class Scenario:
    """Everything needed to synthesize echoes for a run."""

    obstacles: list
    poses: np.ndarray
    waveform: Waveform
    grid: ScanGrid
    sigma: float
    tx_power: float
    max_range: float = 100.0
    mounts: tuple = field(default=RADAR_MOUNTS)

    def __post_init__(self):
        self.poses = np.atleast_2d(np.asarray(self.poses, dtype=float))
        if self.poses.shape[0] < 1 or self.poses.shape[1] != 3:
            raise ValueError("poses must have shape (Z, 3) with Z >= 1")
        if len(self.mounts) != 4:
            raise ValueError("the vehicle carries four radars")

    @property
    def cycles(self) -> int:
        return self.poses.shape[0]

    @property
    def max_delay_samples(self) -> int:
        return int(np.ceil(2 * self.max_range / SPEED_OF_LIGHT * self.waveform.sample_rate))

    @property
    def signal_length(self) -> int:
        return self.waveform.n_samples + self.max_delay_samples

    def radar_pose(self, cycle: int, radar: int):
        """World position and boresight heading of a radar."""
        x, y, heading = self.poses[cycle]
        return np.array([x, y]), heading + self.mounts[radar]


def visible_obstacles(scenario: Scenario, cycle: int, radar: int) -> list:
    """Obstacles inside a radar's sector and range as ``(range, azimuth, beta)``.

    The sector is half-open, ``[-span/2, span/2)``, so neighbouring radars
    never both claim an obstacle on their common edge.
    """
    if not 0 <= cycle < scenario.cycles:
        raise IndexError(f"cycle {cycle} outside 0..{scenario.cycles - 1}")
    origin, bore = scenario.radar_pose(cycle, radar)
    half = np.deg2rad(scenario.grid.sector_deg) / 2
    out = []
    for ob in scenario.obstacles:
        d = ob.position - origin
        r = float(np.hypot(*d))
        if r <= 0 or r > scenario.max_range:
            continue
        az = wrap_angle(np.arctan2(d[1], d[0]) - bore)
        if -half - 1e-12 <= az < half - 1e-12:
            out.append((r, float(az), complex(ob.reflectivity)))
    return out


def slot_seed(master_seed: int, cycle: int, radar: int, slot: int) -> np.random.SeedSequence:
    """Per-slot noise stream, independent of processing order."""
    return np.random.SeedSequence([int(master_seed), int(cycle), int(radar), int(slot)])


@dataclass
class SlotSignal:
    cycle: int
    radar: int
    slot: int
    samples: np.ndarray


def echo(scenario: Scenario, targets: list, beam: Beam) -> np.ndarray:
    """Noiseless superposition of ``beta / R^2 * h(theta) * x(t - tau)``."""
    wf = scenario.waveform
    t = np.arange(scenario.signal_length) / wf.sample_rate
    y = np.zeros(t.size, dtype=complex)
    for r, az, beta in targets:
        tau = 2 * r / SPEED_OF_LIGHT
        y += (beta / r ** 2) * beam.gain(az) * wf.evaluate(t - tau)
    return y


def synthesize_slot(scenario: Scenario, cycle: int, radar: int, slot: int, beam: Beam,
                    seed: int) -> SlotSignal:
    """Received samples of one scan slot.

    Noise is complex Gaussian with variance ``sigma^2 * sum |w_R|^2`` per
    sample, drawn from the stream of :func:`slot_seed`.
    """
    y = echo(scenario, visible_obstacles(scenario, cycle, radar), beam)
    if scenario.sigma > 0:
        rng = np.random.default_rng(slot_seed(seed, cycle, radar, slot))
        std = scenario.sigma * np.sqrt(beam.noise_gain / 2)
        y = y + std * (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size))
    return SlotSignal(cycle, radar, slot, y)


def synthesize_radar(scenario: Scenario, cycle: int, radar: int, beams: list,
                     seed: int) -> np.ndarray:
    """All slots of one radar in one cycle, shape (I, n).

    Equal, sample for sample, to stacking :func:`synthesize_slot` over the
    slots, but each delayed chirp is evaluated once and shared by all slots.
    """
    wf = scenario.waveform
    targets = visible_obstacles(scenario, cycle, radar)
    n = scenario.signal_length
    y = np.zeros((len(beams), n), dtype=complex)
    if targets:
        t = np.arange(n) / wf.sample_rate
        chirps = np.stack([(beta / r ** 2) * wf.evaluate(t - 2 * r / SPEED_OF_LIGHT)
                           for r, _, beta in targets])
        az = np.array([a for _, a, _ in targets])
        gains = np.stack([b.gain(az) for b in beams])
        y += gains @ chirps
    if scenario.sigma > 0:
        for i, b in enumerate(beams):
            rng = np.random.default_rng(slot_seed(seed, cycle, radar, i))
            std = scenario.sigma * np.sqrt(b.noise_gain / 2)
            y[i] += std * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return y


def dump_signals(path, signals: np.ndarray, **meta) -> None:
    """Write complex samples as little-endian float64 (re, im) pairs plus a sidecar."""
    path = Path(path)
    arr = np.ascontiguousarray(signals, dtype=np.complex128)
    inter = np.empty(arr.shape + (2,), dtype="<f8")
    inter[..., 0] = arr.real
    inter[..., 1] = arr.imag
    path.write_bytes(inter.tobytes())
    side = {"shape": list(arr.shape), "dtype": "float64-le", "layout": "interleaved re,im"}
    side.update(meta)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=1))


def load_signals(path) -> np.ndarray:
    path = Path(path)
    side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    flat = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(tuple(side["shape"]) + (2,))
    return flat[..., 0] + 1j * flat[..., 1]
