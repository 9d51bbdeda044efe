"""Hot numeric kernels: batched geodesic distances and ball containment counts.

Two interchangeable backends share one calling convention:

* a numba ``@njit`` backend (default), compiled lazily and cached on disk,
* a pure-numpy backend, selected by setting the environment variable
  ``BALLCOVER_NO_NUMBA`` to a truthy value before import (also used
  automatically when numba is unavailable).

``benchmarks/bench_kernels.py`` times the two backends against each other.

All kernels take the space as an integer ``kind`` code plus a ``periods``
array (empty except for the flat torus) so a single compiled function serves
every model space.  Inputs are assumed pre-validated: C-contiguous float64
arrays whose rows satisfy the point invariants of the space.
"""

import math
import os

import numpy as np

KIND_EUCLIDEAN = 0
KIND_SPHERE = 1
KIND_HYPERBOLIC = 2
KIND_TORUS = 3

_EMPTY_PERIODS = np.empty(0, dtype=np.float64)

# Chunk edge for the numpy backend so intermediate (m, k, d) buffers stay
# below ~64 MB.
_NP_CHUNK = 2 ** 22


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _cdist_block_np(kind, X, Y, periods):
    if kind == KIND_EUCLIDEAN:
        diff = X[:, None, :] - Y[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if kind == KIND_SPHERE:
        # chord formulas: 2 asin(|p-q|/2) resp. 2 acos(|p+q|/2), accurate
        # near both ends of [0, pi]
        dots = X @ Y.T
        diff = X[:, None, :] - Y[None, :, :]
        dm = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        plus = X[:, None, :] + Y[None, :, :]
        dp = np.sqrt(np.einsum("ijk,ijk->ij", plus, plus))
        return np.where(dots >= 0.0,
                        2.0 * np.arcsin(np.minimum(1.0, dm / 2.0)),
                        2.0 * np.arccos(np.minimum(1.0, dp / 2.0)))
    if kind == KIND_HYPERBOLIC:
        diff = X[:, None, :] - Y[None, :, :]
        s = np.einsum("ijk,ijk->ij", diff[..., 1:], diff[..., 1:]) \
            - diff[..., 0] ** 2
        return 2.0 * np.arcsinh(np.sqrt(np.maximum(0.0, s)) / 2.0)
    diff = np.abs(X[:, None, :] - Y[None, :, :]) % periods
    diff = np.minimum(diff, periods - diff)
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _cdist_np(kind, X, Y, periods):
    m, k = X.shape[0], Y.shape[0]
    d = X.shape[1]
    if m * k * d <= _NP_CHUNK:
        return _cdist_block_np(kind, X, Y, periods)
    out = np.empty((m, k), dtype=np.float64)
    step = max(1, _NP_CHUNK // max(1, k * d))
    for i in range(0, m, step):
        out[i:i + step] = _cdist_block_np(kind, X[i:i + step], Y, periods)
    return out


def _dists_to_point_np(kind, X, y, periods):
    return _cdist_np(kind, X, y[None, :], periods)[:, 0]


def _mass_within_np(kind, points, weights, centers, radii, periods):
    out = np.empty(centers.shape[0], dtype=np.float64)
    for j in range(centers.shape[0]):
        d = _dists_to_point_np(kind, points, centers[j], periods)
        out[j] = weights[d < radii[j]].sum()
    return out


def _contain_counts_np(kind, probes, centers, radii, periods):
    counts = np.empty(probes.shape[0], dtype=np.int64)
    step = max(1, _NP_CHUNK // max(1, centers.shape[0] * probes.shape[1]))
    for i in range(0, probes.shape[0], step):
        d = _cdist_np(kind, probes[i:i + step], centers, periods)
        counts[i:i + step] = (d < radii[None, :]).sum(axis=1)
    return counts


_NUMPY_IMPL = {
    "cdist": _cdist_np,
    "dists_to_point": _dists_to_point_np,
    "mass_within": _mass_within_np,
    "contain_counts": _contain_counts_np,
}


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

def _build_numba_impl():
    from numba import njit

    # Rows are addressed by index pairs (no per-pair row views) and the
    # distance helper is force-inlined, so each kernel compiles to flat
    # loops over the coordinate arrays.
    @njit(cache=True, inline="always")
    def dist_ij(kind, X, i, Y, j, periods):
        d = X.shape[1]
        if kind == 0:
            s = 0.0
            for k in range(d):
                t = X[i, k] - Y[j, k]
                s += t * t
            return math.sqrt(s)
        elif kind == 1:
            # chord formulas, accurate near both ends of [0, pi]
            c = 0.0
            for k in range(d):
                c += X[i, k] * Y[j, k]
            s = 0.0
            if c >= 0.0:
                for k in range(d):
                    t = X[i, k] - Y[j, k]
                    s += t * t
                h = math.sqrt(s) / 2.0
                if h > 1.0:
                    h = 1.0
                return 2.0 * math.asin(h)
            for k in range(d):
                t = X[i, k] + Y[j, k]
                s += t * t
            h = math.sqrt(s) / 2.0
            if h > 1.0:
                h = 1.0
            return 2.0 * math.acos(h)
        elif kind == 2:
            t0 = X[i, 0] - Y[j, 0]
            s = -t0 * t0
            for k in range(1, d):
                t = X[i, k] - Y[j, k]
                s += t * t
            if s < 0.0:
                s = 0.0
            return 2.0 * math.asinh(math.sqrt(s) / 2.0)
        else:
            s = 0.0
            for k in range(d):
                t = abs(X[i, k] - Y[j, k]) % periods[k]
                if t > periods[k] - t:
                    t = periods[k] - t
                s += t * t
            return math.sqrt(s)

    @njit(cache=True)
    def cdist(kind, X, Y, periods):
        out = np.empty((X.shape[0], Y.shape[0]), dtype=np.float64)
        for i in range(X.shape[0]):
            for j in range(Y.shape[0]):
                out[i, j] = dist_ij(kind, X, i, Y, j, periods)
        return out

    @njit(cache=True)
    def dists_to_point(kind, X, y, periods):
        Y = y.reshape(1, y.shape[0])
        out = np.empty(X.shape[0], dtype=np.float64)
        for i in range(X.shape[0]):
            out[i] = dist_ij(kind, X, i, Y, 0, periods)
        return out

    @njit(cache=True)
    def mass_within(kind, points, weights, centers, radii, periods):
        out = np.zeros(centers.shape[0], dtype=np.float64)
        for j in range(centers.shape[0]):
            acc = 0.0
            for i in range(points.shape[0]):
                if dist_ij(kind, points, i, centers, j, periods) < radii[j]:
                    acc += weights[i]
            out[j] = acc
        return out

    @njit(cache=True)
    def contain_counts(kind, probes, centers, radii, periods):
        out = np.zeros(probes.shape[0], dtype=np.int64)
        for i in range(probes.shape[0]):
            c = 0
            for j in range(centers.shape[0]):
                if dist_ij(kind, probes, i, centers, j, periods) < radii[j]:
                    c += 1
            out[i] = c
        return out

    return {
        "cdist": cdist,
        "dists_to_point": dists_to_point,
        "mass_within": mass_within,
        "contain_counts": contain_counts,
    }


def _env_disabled():
    return os.environ.get("BALLCOVER_NO_NUMBA", "").strip().lower() in (
        "1", "true", "yes", "on",
    )


if _env_disabled():
    _IMPL = _NUMPY_IMPL
    BACKEND = "numpy"
else:
    try:
        _IMPL = _build_numba_impl()
        BACKEND = "numba"
    except ImportError:
        _IMPL = _NUMPY_IMPL
        BACKEND = "numpy"


def _as_c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def cdist(kind, X, Y, periods=None):
    """Full (len(X), len(Y)) matrix of geodesic distances."""
    p = _as_c64(periods) if periods is not None else _EMPTY_PERIODS
    return _IMPL["cdist"](kind, _as_c64(X), _as_c64(Y), p)


def dists_to_point(kind, X, y, periods=None):
    """Geodesic distances from each row of X to the single point y."""
    p = _as_c64(periods) if periods is not None else _EMPTY_PERIODS
    return _IMPL["dists_to_point"](kind, _as_c64(X), _as_c64(y), p)


def mass_within(kind, points, weights, centers, radii, periods=None):
    """Per center j, the total weight of points with distance < radii[j]."""
    p = _as_c64(periods) if periods is not None else _EMPTY_PERIODS
    return _IMPL["mass_within"](
        kind, _as_c64(points), _as_c64(weights), _as_c64(centers),
        _as_c64(radii), p,
    )


def contain_counts(kind, probes, centers, radii, periods=None):
    """Per probe, how many open balls (centers[j], radii[j]) contain it."""
    p = _as_c64(periods) if periods is not None else _EMPTY_PERIODS
    return _IMPL["contain_counts"](
        kind, _as_c64(probes), _as_c64(centers), _as_c64(radii), p,
    )
