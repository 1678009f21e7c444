"""Localization and mapping from per-cycle point clouds.

Each cycle runs registration against the previous cloud (giving the
vehicle's motion in the previous vehicle frame), propagates a set of pose
particles with that motion plus noise, and then, per particle, moves the
cloud into the map frame, associates points with landmarks, refines matched
landmarks with a Kalman step and re-weights the particle.

Poses are ``(x, y, heading)`` in the world frame. A motion ``(t, r)`` maps
the pose at cycle ``z-1`` to cycle ``z`` as ``x_z = x_{z-1} + R(h_{z-1}) t``
and ``h_z = h_{z-1} + r``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import EmptyCloud, SingularInnovationCov
from .scene import rot, wrap_angle


def compose(pose, t, r) -> np.ndarray:
    """Apply motion ``(t, r)`` to ``pose``."""
    x, y, h = pose
    dx, dy = rot(h) @ np.asarray(t, dtype=float)
    return np.array([x + dx, y + dy, wrap_angle(h + r)])


def relative_motion(pose_prev, pose_next):
    """Inverse of :func:`compose`: the ``(t, r)`` taking one pose to the next."""
    d = np.asarray(pose_next[:2], dtype=float) - np.asarray(pose_prev[:2], dtype=float)
    return rot(-pose_prev[2]) @ d, wrap_angle(pose_next[2] - pose_prev[2])


def compensate(points, pose) -> np.ndarray:
    """Vehicle-frame points to the map frame for a vehicle at ``pose``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return pts @ rot(pose[2]).T + np.asarray(pose[:2], dtype=float)


def to_vehicle(points, pose) -> np.ndarray:
    """Inverse of :func:`compensate`."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return (pts - np.asarray(pose[:2], dtype=float)) @ rot(pose[2])


@dataclass
class GridMap:
    """Accumulated point intensities on a square grid centred on the origin."""

    grid: np.ndarray
    cell: float
    extent: float

    def index(self, points) -> np.ndarray:
        return np.floor((np.asarray(points) + self.extent) / self.cell).astype(int)


def cloud_to_grid(points, amplitudes, cell: float, extent: float) -> GridMap:
    """Deposit ``|amplitude|`` of each point into its cell.

    The grid spans ``[-extent, extent)`` on both axes; points outside are
    dropped.
    """
    if cell <= 0:
        raise ValueError("cell size must be positive")
    n = int(np.ceil(2 * extent / cell))
    grid = GridMap(np.zeros((n, n)), cell, extent)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size == 0:
        return grid
    idx = grid.index(pts)
    ok = np.all((idx >= 0) & (idx < n), axis=1)
    np.add.at(grid.grid, (idx[ok, 0], idx[ok, 1]), np.abs(np.asarray(amplitudes))[ok])
    return grid


@dataclass
class RegistrationConfig:
    """Search window of the correlation registrar.

    Both clouds are rasterized at ``cell`` and blurred with a Gaussian of
    ``blur`` cells before their inner product is taken.
    """

    cell: float = 0.2
    window: float = 3.0
    max_rotation_deg: float = 10.0
    rotation_step_deg: float = 0.5
    blur: float = 1.5

    def rotations(self) -> np.ndarray:
        n = int(round(self.max_rotation_deg / self.rotation_step_deg))
        return np.deg2rad(np.arange(-n, n + 1) * self.rotation_step_deg)


@dataclass
class RegistrationResult:
    t: np.ndarray
    r: float
    score: float = 0.0
    confident: bool = True


def _cell(points, cell):
    return np.floor(points / cell + 0.5).astype(int)


def register(points, amplitudes, prev_points, prev_amplitudes,
             cfg: RegistrationConfig | None = None, prior=None) -> RegistrationResult:
    """Exhaustive correlation search for the motion aligning two clouds.

    Returns the ``(t, r)`` maximizing the inner product between the grid of
    the current cloud transformed by ``p -> R(r) p + t`` and the grid of the
    previous cloud. ``t`` runs over whole cells inside the window, ``r`` over
    the rotation steps. Exact ties go to the smallest ``|t|``, then ``|r|``.

    If either cloud is empty the ``prior`` motion is returned flagged as not
    confident; without a prior ``EmptyCloud`` is raised.
    """
    cfg = cfg or RegistrationConfig()
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    q = np.asarray(prev_points, dtype=float).reshape(-1, 2)
    if len(p) == 0 or len(q) == 0:
        if prior is None:
            raise EmptyCloud("cannot register an empty point cloud")
        t, r = prior
        return RegistrationResult(np.asarray(t, dtype=float), float(r), 0.0, False)
    wp = np.abs(np.asarray(amplitudes))
    wq = np.abs(np.asarray(prev_amplitudes))
    wp = wp / wp.max()
    wq = wq / wq.max()
    w_pair = (wp[:, None] * wq[None, :]).ravel()
    cq = _cell(q, cfg.cell)

    half = int(round(cfg.window / cfg.cell))
    sig = cfg.blur * np.sqrt(2)
    pad = int(np.ceil(4 * sig))
    size = 2 * (half + pad) + 1
    ks = np.arange(-half, half + 1)
    kx, ky = np.meshgrid(ks, ks, indexing="ij")
    tie = np.hypot(kx, ky)

    best = None
    for r in cfg.rotations():
        cp = _cell(p @ rot(r).T, cfg.cell)
        k = (cq[None, :, :] - cp[:, None, :]).reshape(-1, 2)
        ok = np.all(np.abs(k) <= half + pad, axis=1)
        hist = np.zeros((size, size))
        np.add.at(hist, (k[ok, 0] + half + pad, k[ok, 1] + half + pad), w_pair[ok])
        if sig > 0:
            hist = gaussian_filter(hist, sig, mode="constant", truncate=4.0)
        score = hist[pad:pad + 2 * half + 1, pad:pad + 2 * half + 1]
        top = score.max()
        cand = np.argwhere(score >= top - 1e-12 * max(top, 1e-300))
        j = min(cand, key=lambda c: (tie[c[0], c[1]], 0))
        key = (-top, tie[j[0], j[1]], abs(r))
        if best is None or key < best[0]:
            best = (key, np.array([ks[j[0]], ks[j[1]]]) * cfg.cell, float(r), float(top))
    _, t, r, top = best
    return RegistrationResult(t, r, top, True)


def registration_loss(t_hat, r_hat, t_true, r_true, gamma_r: float) -> float:
    """Batch mean of ``||t_hat - t||^2 + gamma_r * (r_hat - r)^2``."""
    t_hat = np.asarray(t_hat, dtype=float).reshape(-1, 2)
    t_true = np.asarray(t_true, dtype=float).reshape(-1, 2)
    r_hat = np.asarray(r_hat, dtype=float).reshape(-1)
    r_true = np.asarray(r_true, dtype=float).reshape(-1)
    if not (len(t_hat) == len(t_true) == len(r_hat) == len(r_true)):
        raise ValueError("batches must have equal length")
    dt = np.sum((t_hat - t_true) ** 2, axis=1)
    dr = wrap_angle(r_hat - r_true) ** 2
    return float(np.mean(dt + gamma_r * dr))


@dataclass
class AssociationResult:
    matches: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)
    distances: list = field(default_factory=list)


def associate(points, landmarks, gate: float) -> AssociationResult:
    """Greedy one-to-one nearest-neighbour matching under a distance gate.

    All point/landmark pairs are visited in ascending distance; a pair is
    accepted when both ends are still free and the distance is at most
    ``gate``. Points left over are reported as unmatched.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    lms = np.asarray(landmarks, dtype=float).reshape(-1, 2)
    res = AssociationResult()
    if len(lms) and len(pts):
        d = np.linalg.norm(pts[:, None, :] - lms[None, :, :], axis=-1)
        order = np.argsort(d, axis=None, kind="stable")
        used_p = np.zeros(len(pts), dtype=bool)
        used_l = np.zeros(len(lms), dtype=bool)
        for flat in order:
            i, j = divmod(int(flat), len(lms))
            if d[i, j] > gate:
                break
            if used_p[i] or used_l[j]:
                continue
            used_p[i] = used_l[j] = True
            res.matches.append((i, j))
            res.distances.append(float(d[i, j]))
        res.unmatched = [i for i in range(len(pts)) if not used_p[i]]
    else:
        res.unmatched = list(range(len(pts)))
    return res


@dataclass
class Landmark:
    mean: np.ndarray
    cov: np.ndarray
    weight: float = 1.0
    hits: int = 1


def _psd(cov):
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    vals, vecs = np.linalg.eigh(cov)
    if np.all(vals >= 0):
        return cov
    vals = np.where(vals < 0, 0.0, vals)
    out = (vecs * vals[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def ekf_update(landmark: Landmark, observed, obs_cov) -> Landmark:
    """Kalman refinement of a landmark from a map-frame observation.

    With the observation taken as the landmark position itself the Jacobian
    is the identity, so ``J = Lambda + J_c``, the mean moves by
    ``Lambda J^-1 (z - e)`` and ``Lambda <- (I - Lambda J^-1) Lambda``.
    """
    lam = np.asarray(landmark.cov, dtype=float)
    F = np.eye(2)
    J = F @ lam @ F.T + np.asarray(obs_cov, dtype=float)
    if abs(np.linalg.det(J)) < 1e-300 or np.linalg.cond(J) > 1e12:
        raise SingularInnovationCov("innovation covariance is singular")
    K = lam @ F.T @ np.linalg.inv(J)
    innov = np.asarray(observed, dtype=float) - landmark.mean
    mean = landmark.mean + K @ innov
    cov = _psd((np.eye(2) - K @ F) @ lam)
    return Landmark(mean, cov, landmark.weight, landmark.hits + 1)


@dataclass
class Particle:
    """Pose hypothesis and its own landmark map (arrays indexed by landmark)."""

    pose: np.ndarray
    weight: float = 1.0
    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    covs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    hits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    last_seen: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def copy(self) -> "Particle":
        return copy.deepcopy(self)

    @property
    def landmarks(self) -> list:
        return [Landmark(m, c, 1.0, int(h)) for m, c, h in zip(self.means, self.covs, self.hits)]


def particle_seed(seed: int, cycle: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(cycle), int(index), 0xB0])


def predict_particles(particles: list, t, r, sigma_t: float, sigma_r: float,
                      seed: int = 0, cycle: int = 0) -> list:
    """Move every particle by ``(t, r)`` plus its own Gaussian perturbation."""
    out = []
    for c, p in enumerate(particles):
        rng = np.random.default_rng(particle_seed(seed, cycle, c))
        nt = rng.standard_normal(2) * sigma_t
        nr = rng.standard_normal() * sigma_r
        q = p.copy()
        q.pose = compose(p.pose, np.asarray(t, dtype=float) + nt, r + nr)
        out.append(q)
    return out


def _log_gauss(innov, cov):
    sign, logdet = np.linalg.slogdet(cov)
    maha = innov @ np.linalg.solve(cov, innov)
    return -0.5 * (maha + logdet) - np.log(2 * np.pi)


@dataclass
class SlamConfig:
    """Filter settings. Angles in radians, lengths in metres."""

    particles: int = 50
    gate: float = 2.0
    gamma_r: float = 10.0
    sigma_t: float = 0.15
    sigma_r: float = np.deg2rad(0.5)
    obs_std: float = 0.5
    init_std: float = 1.0
    prune_after: int = 10
    min_hits: int = 2
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)


def new_landmark_log_factor(cfg: SlamConfig) -> float:
    """Log-likelihood credited to a point that opens or misses a landmark.

    It equals the match likelihood of a fresh landmark at the gate distance,
    so a match beyond the gate never scores better than no match.
    """
    cov = np.eye(2) * (cfg.obs_std ** 2 + cfg.init_std ** 2)
    return _log_gauss(np.array([cfg.gate, 0.0]), cov)


def update_particle(p: Particle, points_vehicle, amplitudes, cycle: int,
                    cfg: SlamConfig) -> tuple:
    """Associate, refine landmarks and open new ones for one particle.

    Returns ``(association, log_factors)`` where ``log_factors[u]`` is the
    log-likelihood of point ``u`` before amplitude scaling.
    """
    pts = compensate(points_vehicle, p.pose)
    assoc = associate(pts, p.means, cfg.gate)
    obs_cov = np.eye(2) * cfg.obs_std ** 2
    log_new = new_landmark_log_factor(cfg)
    log_f = np.full(len(pts), log_new)
    for u, l in assoc.matches:
        lm = Landmark(p.means[l], p.covs[l], 1.0, int(p.hits[l]))
        J = lm.cov + obs_cov
        log_f[u] = _log_gauss(pts[u] - lm.mean, J)
        upd = ekf_update(lm, pts[u], obs_cov)
        p.means[l], p.covs[l], p.hits[l] = upd.mean, upd.cov, upd.hits
        p.last_seen[l] = cycle
    fresh = []
    for u in assoc.unmatched:
        near_old = len(p.means) and np.min(np.linalg.norm(p.means - pts[u], axis=1)) <= cfg.gate
        near_new = any(np.linalg.norm(pts[u] - pts[v]) <= cfg.gate for v in fresh)
        if not near_old and not near_new:
            fresh.append(u)
    if fresh:
        n = len(fresh)
        p.means = np.vstack([p.means, pts[fresh]])
        p.covs = np.concatenate([p.covs, np.tile(np.eye(2) * cfg.init_std ** 2, (n, 1, 1))])
        p.ids = np.concatenate([p.ids, [cycle * 100_000 + u for u in fresh]]).astype(np.int64)
        p.hits = np.concatenate([p.hits, np.ones(n, dtype=int)])
        p.last_seen = np.concatenate([p.last_seen, np.full(n, cycle, dtype=int)])
    stale = (cycle - p.last_seen >= cfg.prune_after) & (p.hits < cfg.min_hits)
    if np.any(stale):
        keep = ~stale
        p.means, p.covs, p.ids = p.means[keep], p.covs[keep], p.ids[keep]
        p.hits, p.last_seen = p.hits[keep], p.last_seen[keep]
    return assoc, log_f


def weight_particles(particles: list, log_factors: list, amplitudes) -> list:
    """Multiply each weight by its amplitude-scaled point likelihoods, normalize.

    Point ``u`` contributes ``L_u ** a_u`` with ``a_u = |s_u| / max |s|``.
    If every weight underflows the set falls back to uniform weights.
    """
    a = np.abs(np.asarray(amplitudes, dtype=complex)).astype(float)
    a = a / a.max() if a.size and a.max() > 0 else a
    logw = np.array([np.log(p.weight) if p.weight > 0 else -np.inf for p in particles])
    for c, lf in enumerate(log_factors):
        if len(lf):
            logw[c] += float(np.dot(a, lf))
    if not np.any(np.isfinite(logw)):
        w = np.full(len(particles), 1 / len(particles))
    else:
        w = np.exp(logw - logw[np.isfinite(logw)].max())
        w = w / w.sum()
    for p, wi in zip(particles, w):
        p.weight = float(wi)
    return particles


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / np.sum(w ** 2)


def systematic_indices(weights, u0: float) -> np.ndarray:
    """Offspring indices for low-variance resampling with offset ``u0`` in [0, 1)."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return np.searchsorted(cum, (np.arange(n) + u0) / n, side="right")


def resample(particles: list, rng: np.random.Generator, force: bool = False) -> list:
    """Systematic resampling when the effective sample size drops below N/2."""
    n = len(particles)
    w = np.array([p.weight for p in particles])
    if not force and effective_sample_size(w) >= n / 2:
        return particles
    idx = systematic_indices(w, rng.uniform())
    out = [particles[i].copy() for i in idx]
    for p in out:
        p.weight = 1.0 / n
    return out


@dataclass
class MapLandmark:
    id: int
    mean: np.ndarray
    cov: np.ndarray
    hits: float
    support: float


def estimate(particles: list, min_support: float = 0.5, min_hits: int = 1):
    """Weighted pose (circular mean heading) and weighted landmark map.

    Landmarks are matched across particles by id. A landmark enters the map
    when the particles carrying it hold at least ``min_support`` of the
    weight and their weighted hit count reaches ``min_hits``.
    """
    w = np.array([p.weight for p in particles], dtype=float)
    w = w / w.sum()
    poses = np.array([p.pose for p in particles])
    xy = w @ poses[:, :2]
    h = np.arctan2(w @ np.sin(poses[:, 2]), w @ np.cos(poses[:, 2]))
    acc: dict[int, list] = {}
    for wi, p in zip(w, particles):
        for k, lid in enumerate(p.ids):
            acc.setdefault(int(lid), []).append((wi, p.means[k], p.covs[k], p.hits[k]))
    out = []
    for lid in sorted(acc):
        rows = acc[lid]
        ws = np.array([r[0] for r in rows])
        support = ws.sum()
        if support < min_support or support <= 0:
            continue
        ws = ws / support
        mean = ws @ np.array([r[1] for r in rows])
        cov = np.tensordot(ws, np.array([r[2] for r in rows]), axes=1)
        hits = float(ws @ np.array([r[3] for r in rows]))
        if hits < min_hits:
            continue
        out.append(MapLandmark(lid, mean, cov, hits, float(support)))
    return np.array([xy[0], xy[1], h]), out


class RBPF:
    """Cycle-by-cycle driver of registration and the particle filter."""

    def __init__(self, initial_pose, cfg: SlamConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        n = cfg.particles
        self.particles = [Particle(np.asarray(initial_pose, dtype=float).copy(), 1.0 / n)
                          for _ in range(n)]
        self.prev = None
        self.motion = (np.zeros(2), 0.0)
        self.motions: list = []

    def step(self, points, amplitudes, cycle: int):
        """Consume one vehicle-frame cloud; return the pose and map estimate."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        cfg = self.cfg
        if self.prev is not None:
            reg = register(pts, amps, self.prev[0], self.prev[1], cfg.registration, self.motion)
            self.motion = (reg.t, reg.r)
            self.motions.append(reg)
            self.particles = predict_particles(self.particles, reg.t, reg.r, cfg.sigma_t,
                                               cfg.sigma_r, self.seed, cycle)
        if len(pts):
            factors = [update_particle(p, pts, amps, cycle, cfg)[1] for p in self.particles]
            weight_particles(self.particles, factors, amps)
            rng = np.random.default_rng(particle_seed(self.seed, cycle, 1 << 20))
            self.particles = resample(self.particles, rng)
            self.prev = (pts, amps)
        return estimate(self.particles, min_hits=cfg.min_hits)
