"""Multivariate normal box probabilities by quasi-Monte Carlo.

Box integrals use the separation-of-variables transform: the covariance is
Cholesky-factored and the box probability becomes an integral over the unit
cube one dimension lower, evaluated on a fixed Halton point set. Results are
therefore deterministic for a given (mean, cov, box).
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NonPositiveDefiniteError

QMC_POINTS = 4096

_halton_cache: dict[tuple[int, int], np.ndarray] = {}


def _radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    result = np.zeros(indices.shape, dtype=np.float64)
    frac = 1.0 / base
    i = indices.copy()
    while np.any(i > 0):
        result += (i % base) * frac
        i //= base
        frac /= base
    return result


def halton(count: int, dim: int) -> np.ndarray:
    """First ``count`` points of the Halton sequence in ``dim`` dimensions."""
    key = (count, dim)
    cached = _halton_cache.get(key)
    if cached is None:
        primes = [2, 3, 5, 7, 11, 13, 17, 19]
        idx = np.arange(1, count + 1, dtype=np.int64)
        cached = np.stack([_radical_inverse(idx, primes[d]) for d in range(dim)], axis=0)
        cached.setflags(write=False)
        _halton_cache[key] = cached
    return cached


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(np.asarray(cov, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefiniteError("covariance is not positive definite") from exc


def gaussian_box_integral(mean, cov, lower, upper, points: int = QMC_POINTS) -> float:
    """Probability that N(mean, cov) falls inside the axis-aligned box.

    ``lower`` and ``upper`` are the per-axis box bounds. Degenerate boxes
    (lower >= upper on some axis) integrate to zero. Accuracy is ~1e-4
    absolute at the default point count.
    """
    mean = np.asarray(mean, dtype=np.float64)
    a = np.asarray(lower, dtype=np.float64) - mean
    b = np.asarray(upper, dtype=np.float64) - mean
    if np.any(b <= a):
        return 0.0
    chol = _cholesky(cov)
    d = mean.shape[0]
    if d == 1:
        return float(ndtr(b[0] / chol[0, 0]) - ndtr(a[0] / chol[0, 0]))

    w = halton(points, d - 1)
    d1 = ndtr(a[0] / chol[0, 0])
    e1 = ndtr(b[0] / chol[0, 0])
    f = np.full(points, e1 - d1)
    lo = np.full(points, d1)
    hi = np.full(points, e1)
    ys = []
    for axis in range(1, d):
        y = ndtri(np.clip(lo + w[axis - 1] * (hi - lo), 1e-300, 1.0 - 1e-16))
        ys.append(y)
        shift = np.zeros(points)
        for k in range(axis):
            shift += chol[axis, k] * ys[k]
        lo = ndtr((a[axis] - shift) / chol[axis, axis])
        hi = ndtr((b[axis] - shift) / chol[axis, axis])
        f = f * (hi - lo)
    return float(np.mean(f))


def lattice_box_probs(mean, cov, edges0, edges1, edges2, points: int = QMC_POINTS,
                      chunk: int = 16) -> np.ndarray:
    """Box probabilities of N(mean, cov) over a full 3-D product lattice.

    ``edges*`` are the strictly increasing cell boundaries along each axis;
    the result has shape (len(edges0)-1, len(edges1)-1, len(edges2)-1). The
    same transform and point set as :func:`gaussian_box_integral`, batched
    with shared boundary evaluations. The last axis is evaluated in chunks
    to bound memory.
    """
    mean = np.asarray(mean, dtype=np.float64)
    chol = _cholesky(cov)
    e0 = np.asarray(edges0, dtype=np.float64) - mean[0]
    e1 = np.asarray(edges1, dtype=np.float64) - mean[1]
    e2 = np.asarray(edges2, dtype=np.float64) - mean[2]
    n0, n1, n2 = len(e0) - 1, len(e1) - 1, len(e2) - 1

    w = halton(points, 2)

    # Stage 1: first axis, one (d, e) pair per cell.
    b0 = ndtr(e0 / chol[0, 0])                       # (n0+1,)
    lo0, hi0 = b0[:-1], b0[1:]
    f1 = hi0 - lo0                                   # (n0,)
    u = lo0[:, None] + w[0][None, :] * f1[:, None]
    y1 = ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))      # (n0, P)

    # Stage 2: second axis conditioned on y1.
    shift1 = chol[1, 0] * y1                         # (n0, P)
    b1 = ndtr((e1[None, :, None] - shift1[:, None, :]) / chol[1, 1])  # (n0, n1+1, P)
    lo1, hi1 = b1[:, :-1, :], b1[:, 1:, :]
    f2 = (hi1 - lo1) * f1[:, None, None]             # (n0, n1, P)
    u2 = lo1 + w[1][None, None, :] * (hi1 - lo1)
    y2 = ndtri(np.clip(u2, 1e-300, 1.0 - 1e-16))     # (n0, n1, P)

    # Stage 3: third axis; accumulate the QMC mean via a boundary dot product.
    shift2 = (chol[2, 0] * y1[:, None, :] + chol[2, 1] * y2).reshape(n0 * n1, points)
    f2_flat = f2.reshape(n0 * n1, points)
    bounds = np.empty((n0 * n1, n2 + 1))
    for start in range(0, n2 + 1, chunk):
        stop = min(start + chunk, n2 + 1)
        args = (e2[None, start:stop, None] - shift2[:, None, :]) / chol[2, 2]
        b2 = ndtr(args)                              # (n0*n1, stop-start, P)
        bounds[:, start:stop] = np.einsum("igp,ip->ig", b2, f2_flat)
    probs = np.diff(bounds, axis=1) / points         # (n0*n1, n2)
    return probs.reshape(n0, n1, n2)
