"""Point-cloud generation: matched-filter ranging plus OMP angle estimation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .aperture import SPEED_OF_LIGHT
from .errors import OutOfRangeDelay
from .scene import RADAR_MOUNTS, Waveform


@dataclass
class RangeProfile:
    """Energy-normalized cross-correlation of received samples with the chirp.

    ``values[..., j]`` holds lag ``j - lag0`` samples; a target at delay
    ``tau`` peaks near ``tau / bin_width`` with value ``beta' h``.
    """

    values: np.ndarray
    bin_width: float
    lag0: int
    slot: int | None = None

    def delay(self, index):
        return (np.asarray(index) - self.lag0) * self.bin_width

    def index(self, delay: float) -> int:
        """Nearest bin to ``delay``; exact half-bin ties go to the lower bin."""
        x = delay / self.bin_width + self.lag0
        k = int(np.floor(x))
        if x - k > 0.5:
            k += 1
        if not 0 <= k < self.values.shape[-1]:
            raise OutOfRangeDelay(f"delay {delay:g} s outside profile support")
        return k


def matched_filter(samples: np.ndarray, waveform: Waveform, slot: int | None = None) -> RangeProfile:
    """Correlate ``samples`` (shape (n,) or (I, n)) with the chirp via FFT.

    ``iota[k] = sum_t y[t] conj(x[t - k]) / E_x`` for every lag with any
    overlap, so the profile length is ``n + N_x - 1``.
    """
    y = np.atleast_2d(samples)
    x = waveform.samples
    nx, ny = x.size, y.shape[-1]
    length = ny + nx - 1
    nfft = 1 << (length - 1).bit_length()
    spec = np.fft.fft(y, nfft, axis=-1) * np.conj(np.fft.fft(x, nfft))
    corr = np.fft.ifft(spec, axis=-1)
    # negative lags wrap to the end of the circular result
    values = np.concatenate([corr[:, nfft - (nx - 1):], corr[:, :ny]], axis=-1) / waveform.energy
    if np.ndim(samples) == 1:
        values = values[0]
    return RangeProfile(values, 1 / waveform.sample_rate, nx - 1, slot)


@dataclass
class DetectionSet:
    """Local maxima of the range profiles above the detection threshold."""

    delays: np.ndarray
    slots: np.ndarray
    magnitudes: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return self.delays.size

    @property
    def ranges(self) -> np.ndarray:
        return self.delays * SPEED_OF_LIGHT / 2

    def merged_indices(self) -> np.ndarray:
        """Distinct range bins; detections sharing a bin across slots merge."""
        return np.unique(self.indices)


def default_threshold(profile: RangeProfile, factor: float = 8.0) -> np.ndarray:
    """``factor`` times the median magnitude of each profile."""
    return factor * np.median(np.abs(np.atleast_2d(profile.values)), axis=-1)


def detect_peaks(profile: RangeProfile, threshold=None, factor: float = 8.0,
                 max_delay: float | None = None) -> DetectionSet:
    """Strict interior local maxima of ``|iota_i|`` exceeding the threshold.

    ``threshold`` is a scalar or one value per slot; by default it is
    :func:`default_threshold`. Only positive delays (and, if given, delays
    up to ``max_delay``) are searched.
    """
    mag = np.abs(np.atleast_2d(profile.values))
    thr = default_threshold(profile, factor) if threshold is None else threshold
    thr = np.broadcast_to(np.asarray(thr, dtype=float), (mag.shape[0],))
    if np.any(thr <= 0):
        raise ValueError("detection threshold must be positive")
    peak = np.zeros_like(mag, dtype=bool)
    peak[:, 1:-1] = (mag[:, 1:-1] > mag[:, :-2]) & (mag[:, 1:-1] > mag[:, 2:])
    peak &= mag > thr[:, None]
    lo = profile.lag0 + 1
    peak[:, :lo] = False
    if max_delay is not None:
        hi = profile.lag0 + int(np.floor(max_delay / profile.bin_width)) + 1
        peak[:, hi:] = False
    slots, idx = np.nonzero(peak)
    if profile.values.ndim == 1 and profile.slot is not None:
        slots = np.full_like(slots, profile.slot)
    return DetectionSet(profile.delay(idx).astype(float), slots, mag[np.nonzero(peak)], idx)


@dataclass
class Dictionary:
    """Slot-by-direction gain matrix ``H[i, i'] = h_i(theta_i')``."""

    H: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        if np.any(np.linalg.norm(self.H, axis=0) == 0):
            raise ValueError("dictionary columns must be nonzero")


def build_dictionary(beams: list, directions: np.ndarray) -> Dictionary:
    H = np.stack([b.gain(directions) for b in beams])
    return Dictionary(H, np.asarray(directions, dtype=float))


def gain_matrix(beams: list, directions: np.ndarray) -> np.ndarray:
    """Same entries as :func:`build_dictionary` without the nonzero-column check."""
    return np.stack([b.gain(directions) for b in beams])


def coherence_ok(H: np.ndarray) -> np.ndarray:
    """Per column: does a noiseless echo from this direction select itself?

    Column ``i'`` passes when ``|h_i'^H h_i''| < ||h_i'||^2`` for all others.
    """
    G = np.abs(H.conj().T @ H)
    own = np.diag(G).copy()
    np.fill_diagonal(G, -np.inf)
    return G.max(axis=1) < own


def measurement_vector(delay: float, profile: RangeProfile) -> np.ndarray:
    """Every slot's profile sampled at the bin nearest ``delay``."""
    k = profile.index(delay)
    return np.atleast_2d(profile.values)[:, k]


@dataclass
class OMPResult:
    s: np.ndarray
    residual: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)


def omp_angles(iota: np.ndarray, H: np.ndarray, max_iter: int | None = None,
               residual_threshold: float = 0.0, refit: bool = False) -> OMPResult:
    """Greedy sparse fit of ``iota`` over the columns of ``H``.

    Each iteration picks the column with the largest ``|h^H r|``. With
    ``refit`` the coefficients of all picked columns are re-solved jointly by
    least squares, so the residual stays orthogonal to the chosen span.
    Without it only the new column is fitted to the residual and a column
    picked again accumulates its coefficient. Iteration stops after
    ``max_iter`` (default: number of rows) steps, once
    ``||r||^2 < residual_threshold`` or when the residual stops shrinking.
    """
    iota = np.asarray(iota, dtype=complex)
    max_iter = H.shape[0] if max_iter is None else max_iter
    norms = np.sum(np.abs(H) ** 2, axis=0)
    s = np.zeros(H.shape[1], dtype=complex)
    r = iota.copy()
    energy = float(np.vdot(r, r).real)
    history = [energy]
    support: list[int] = []
    it = 0
    while it < max_iter and energy >= residual_threshold and energy > 0:
        corr = H.conj().T @ r
        j = int(np.argmax(np.abs(corr)))
        if corr[j] == 0:
            break
        if refit:
            trial = support + [j] if j not in support else support
            coef, *_ = np.linalg.lstsq(H[:, trial], iota, rcond=None)
            r_new = iota - H[:, trial] @ coef
        else:
            step = corr[j] / norms[j]
            r_new = r - H[:, j] * step
        new = float(np.vdot(r_new, r_new).real)
        if new >= energy:
            break
        if refit:
            support = trial
            s[:] = 0
            s[support] = coef
        else:
            s[j] += step
        r = r_new
        it += 1
        history.append(new)
        energy = new
    return OMPResult(s, r, it, history)


@dataclass
class PointCloud:
    """Detected points of one cycle in radar coordinates."""

    ranges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    azimuths: np.ndarray = field(default_factory=lambda: np.zeros(0))
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    radars: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    cycle: int = 0

    def __len__(self):
        return self.ranges.size

    def cartesian(self, mounts=RADAR_MOUNTS) -> np.ndarray:
        """Vehicle-frame (x, y) of every point."""
        ang = self.azimuths + np.asarray(mounts)[self.radars.astype(int)]
        return np.column_stack([self.ranges * np.cos(ang), self.ranges * np.sin(ang)])

    @classmethod
    def concat(cls, clouds: list, cycle: int = 0) -> "PointCloud":
        if not clouds:
            return cls(cycle=cycle)
        return cls(np.concatenate([c.ranges for c in clouds]),
                   np.concatenate([c.azimuths for c in clouds]),
                   np.concatenate([c.amplitudes for c in clouds]),
                   np.concatenate([c.radars for c in clouds]).astype(int), cycle)

    def rows(self):
        for r, a, s, k in zip(self.ranges, self.azimuths, self.amplitudes, self.radars):
            yield [self.cycle, int(k), float(r), float(a), float(s.real), float(s.imag)]


CLOUD_HEADER = ["cycle", "radar", "range_m", "azimuth_rad", "amp_re", "amp_im"]


def write_clouds(path, clouds: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CLOUD_HEADER)
        for c in clouds:
            for row in c.rows():
                w.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])


def read_clouds(path) -> list:
    by_cycle: dict[int, list] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            by_cycle.setdefault(int(rec["cycle"]), []).append(rec)
    out = []
    for z in sorted(by_cycle):
        recs = by_cycle[z]
        out.append(PointCloud(np.array([float(r["range_m"]) for r in recs]),
                              np.array([float(r["azimuth_rad"]) for r in recs]),
                              np.array([complex(float(r["amp_re"]), float(r["amp_im"])) for r in recs]),
                              np.array([int(r["radar"]) for r in recs]), z))
    return out


def assemble_cloud(ranges, coefficients, directions: np.ndarray, cycle: int = 0,
                   radar: int = 0, range_tol: float = 0.0, angle_tol: float = 0.0) -> PointCloud:
    """One point per nonzero coefficient per detection, duplicates merged.

    Points closer than ``range_tol`` in range and ``angle_tol`` in azimuth
    collapse onto the one with the larger amplitude.
    """
    rr, aa, ss = [], [], []
    for r, s in zip(ranges, coefficients):
        for j in np.flatnonzero(s):
            rr.append(r)
            aa.append(directions[j])
            ss.append(s[j])
    if not rr:
        return PointCloud(cycle=cycle)
    rr, aa, ss = np.array(rr, dtype=float), np.array(aa, dtype=float), np.array(ss, dtype=complex)
    order = np.argsort(-np.abs(ss), kind="stable")
    keep = []
    for i in order:
        if any(abs(rr[i] - rr[k]) <= range_tol and abs(aa[i] - aa[k]) <= angle_tol for k in keep):
            continue
        keep.append(i)
    keep = np.array(sorted(keep))
    return PointCloud(rr[keep], aa[keep], ss[keep], np.full(keep.size, radar, dtype=int), cycle)


@dataclass
class DetectionConfig:
    """Detection and sparse-recovery thresholds.

    ``threshold_factor`` scales the per-profile median magnitude into the
    detection threshold. The OMP residual threshold of a detection is the
    larger of ``noise_factor`` times the expected noise energy of its
    measurement vector and ``energy_fraction`` of the vector's own energy.
    """

    threshold_factor: float = 8.0
    noise_factor: float = 4.0
    energy_fraction: float = 0.05


def radar_point_cloud(signals: np.ndarray, beams: list, dictionary: Dictionary,
                      waveform: Waveform, sigma: float, cfg: DetectionConfig,
                      grid_step: float, max_delay: float | None = None, cycle: int = 0,
                      radar: int = 0) -> PointCloud:
    """Run ranging and angle estimation over all slots of one radar.

    ``grid_step`` is the scan-grid spacing in radians; points within half a
    range bin and half a grid step of each other merge. Columns are selected
    on the unit-norm dictionary, so strong-gain directions do not win by
    default; coefficients are mapped back to physical amplitudes.
    """
    profile = matched_filter(signals, waveform)
    det = detect_peaks(profile, factor=cfg.threshold_factor, max_delay=max_delay)
    if len(det) == 0:
        return PointCloud(cycle=cycle)
    noise = sigma ** 2 * sum(b.noise_gain for b in beams) / waveform.energy
    norms = np.linalg.norm(dictionary.H, axis=0)
    H = dictionary.H / norms
    ranges, coefs = [], []
    for k in det.merged_indices():
        tau = float(profile.delay(k))
        iota = measurement_vector(tau, profile)
        thr = max(cfg.noise_factor * noise, cfg.energy_fraction * float(np.vdot(iota, iota).real))
        res = omp_angles(iota, H, residual_threshold=thr)
        ranges.append(tau * SPEED_OF_LIGHT / 2)
        coefs.append(res.s / norms)
    return assemble_cloud(ranges, coefs, dictionary.directions, cycle, radar,
                          range_tol=0.5 * waveform.range_bin, angle_tol=0.5 * grid_step)
