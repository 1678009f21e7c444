"""Slow, independent reference computations used by the tests.

Everything here is written with plain loops or brute force so that it shares
no code path with the package.
"""

import cmath
import itertools
import math

import numpy as np


def steering(positions, wavelength, azimuth):
    k = 2 * math.pi / wavelength
    return np.array([cmath.exp(1j * k * p[0] * math.sin(azimuth)) for p in positions])


def feed_phase(positions, feed, wavelength, surface_index):
    k = 2 * math.pi / wavelength
    out = []
    for p in positions:
        d = math.sqrt((p[0] - feed[0]) ** 2 + (p[1] - feed[1]) ** 2)
        out.append(cmath.exp(-1j * k * surface_index * d))
    return np.array(out)


def two_way_gain(psi_t, psi_r, pos_t, pos_r, feed_t, feed_r, wavelength, ns, azimuth):
    """``q_R^T Psi_R a_R a_T^T Psi_T q_T`` as an explicit matrix product."""
    a_t = steering(pos_t, wavelength, azimuth).reshape(-1, 1)
    a_r = steering(pos_r, wavelength, azimuth).reshape(-1, 1)
    q_t = feed_phase(pos_t, feed_t, wavelength, ns).reshape(-1, 1)
    q_r = feed_phase(pos_r, feed_r, wavelength, ns).reshape(-1, 1)
    m = q_r.T @ np.diag(psi_r) @ a_r @ a_t.T @ np.diag(psi_t) @ q_t
    return complex(m[0, 0])


def snr(h, psi_r, sigma):
    return abs(h) ** 2 / (sum(p * p for p in psi_r) * sigma ** 2)


def margin(snr_fn, main, sidelobes):
    if len(sidelobes) == 0:
        return math.inf
    g = snr_fn(main)
    return min(g - snr_fn(d) for d in sidelobes)


def shell_candidates(power, step=0.05):
    """Grid points of [0, 1]^2 scaled onto ``psi1^2 + psi2^2 = power`` when feasible."""
    vals = np.arange(0, 1 + 1e-9, step)
    out = []
    for a in vals:
        for b in vals:
            n = math.hypot(a, b)
            if n == 0:
                continue
            s = math.sqrt(power) / n
            if a * s <= 1 + 1e-12 and b * s <= 1 + 1e-12:
                out.append((min(a * s, 1.0), min(b * s, 1.0)))
    return out


def box_candidates(step=0.05):
    vals = np.arange(0, 1 + 1e-9, step)
    return [(a, b) for a in vals for b in vals if a > 0 or b > 0]


def correlate(y, x):
    """``c[l] = sum_n y[n] conj(x[n - l])`` for every lag with overlap."""
    n, m = len(y), len(x)
    lags = range(-(m - 1), n)
    out = []
    for lag in lags:
        acc = 0j
        for k in range(m):
            i = k + lag
            if 0 <= i < n:
                acc += y[i] * np.conj(x[k])
        out.append(acc)
    return np.array(out), np.array(list(lags))


def best_sparse_fit(iota, H, max_support=2):
    """Exhaustive least-squares over every support of size <= ``max_support``.

    Returns ``(support, coefficients)`` of the best fit, preferring the
    smallest support among fits that are exact to 1e-9 relative residual.
    """
    best = None
    e0 = float(np.vdot(iota, iota).real)
    for size in range(1, max_support + 1):
        for sup in itertools.combinations(range(H.shape[1]), size):
            A = H[:, sup]
            c, *_ = np.linalg.lstsq(A, iota, rcond=None)
            r = iota - A @ c
            res = float(np.vdot(r, r).real)
            if best is None or res < best[0] - 1e-12 * e0:
                best = (res, sup, c)
        if best[0] <= 1e-18 * max(e0, 1e-300):
            break
    return best[1], best[2]


def optimal_matching(points, landmarks, gate):
    """Minimum total distance matching maximizing the number of gated pairs."""
    n, m = len(points), len(landmarks)
    d = [[math.dist(points[i], landmarks[j]) for j in range(m)] for i in range(n)]
    best = None
    cols = list(range(m)) + [None] * n
    for perm in set(itertools.permutations(cols, n)):
        pairs = [(i, j) for i, j in enumerate(perm) if j is not None]
        if any(d[i][j] > gate for i, j in pairs):
            continue
        key = (-len(pairs), sum(d[i][j] for i, j in pairs))
        if best is None or key < best[0]:
            best = (key, sorted(pairs))
    return best[1]


def kalman_2d(mean, cov, z, obs_cov):
    """Textbook Kalman step with identity observation, written out longhand."""
    S = [[cov[0][0] + obs_cov[0][0], cov[0][1] + obs_cov[0][1]],
         [cov[1][0] + obs_cov[1][0], cov[1][1] + obs_cov[1][1]]]
    det = S[0][0] * S[1][1] - S[0][1] * S[1][0]
    Si = [[S[1][1] / det, -S[0][1] / det], [-S[1][0] / det, S[0][0] / det]]
    K = [[sum(cov[i][k] * Si[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
    v = [z[0] - mean[0], z[1] - mean[1]]
    new_mean = [mean[i] + K[i][0] * v[0] + K[i][1] * v[1] for i in range(2)]
    IK = [[(1 if i == j else 0) - K[i][j] for j in range(2)] for i in range(2)]
    new_cov = [[sum(IK[i][k] * cov[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
    return np.array(new_mean), np.array(new_cov)


def rotate(points, angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c * x - s * y, s * x + c * y] for x, y in points])


def rmse(a, b):
    total = 0.0
    for p, q in zip(a, b):
        total += sum((pi - qi) ** 2 for pi, qi in zip(p, q))
    return math.sqrt(total / len(a))
