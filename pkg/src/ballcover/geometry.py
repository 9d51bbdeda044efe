"""Closed-form geodesic geometry on the four constant-curvature model spaces.

Supported spaces: Euclidean R^n, the unit sphere S^n (embedded in R^{n+1}),
hyperbolic H^n in the hyperboloid model (Minkowski signature -,+,...,+), and
rectangular flat tori.  Points are plain float64 arrays in the embedding
coordinates of the space; every operation is a pure function of its inputs.

Dimensions 1 <= n <= 8 are supported.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import kernels
from .errors import DomainError, InvalidInputError, InvalidTripleError, \
    InvariantViolationError

MAX_DIM = 8

# Roundoff budgets: hard invariants get 1e-12, anything passing through
# arccos/arccosh gets 1e-9 of clamping slack.
EXACT_SLACK = 1e-12
TRANSCENDENTAL_SLACK = 1e-9


@dataclass(frozen=True)
class ModelSpace:
    """One of the four constant-curvature geometries.

    ``kind`` is one of ``"euclidean"``, ``"sphere"``, ``"hyperbolic"``,
    ``"torus"``; ``periods`` is set only for the torus.
    """

    kind: str
    dim: int
    periods: tuple = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "sphere", "hyperbolic", "torus"):
            raise InvalidInputError(f"unknown space kind {self.kind!r}")
        if not (1 <= self.dim <= MAX_DIM):
            raise InvalidInputError(
                f"dim must be in [1, {MAX_DIM}], got {self.dim}")
        if self.kind == "torus":
            if self.periods is None or len(self.periods) != self.dim:
                raise InvalidInputError("torus needs one period per dimension")
            if any(p <= 0 for p in self.periods):
                raise InvalidInputError("torus periods must be positive")
        elif self.periods is not None:
            raise InvalidInputError(f"{self.kind} space takes no periods")

    @classmethod
    def euclidean(cls, dim):
        return cls("euclidean", dim)

    @classmethod
    def sphere(cls, dim):
        return cls("sphere", dim)

    @classmethod
    def hyperbolic(cls, dim):
        return cls("hyperbolic", dim)

    @classmethod
    def torus(cls, periods):
        periods = tuple(float(p) for p in periods)
        return cls("torus", len(periods), periods)

    @property
    def ambient_dim(self):
        """Length of the coordinate vector representing a point."""
        if self.kind in ("sphere", "hyperbolic"):
            return self.dim + 1
        return self.dim

    @property
    def kind_code(self):
        return {
            "euclidean": kernels.KIND_EUCLIDEAN,
            "sphere": kernels.KIND_SPHERE,
            "hyperbolic": kernels.KIND_HYPERBOLIC,
            "torus": kernels.KIND_TORUS,
        }[self.kind]

    @property
    def periods_array(self):
        if self.kind == "torus":
            return np.asarray(self.periods, dtype=np.float64)
        return None

    def to_json(self):
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "torus":
            out["periods"] = list(self.periods)
        return out

    @classmethod
    def from_json(cls, obj):
        kind = obj.get("kind")
        if kind == "torus":
            return cls.torus(obj["periods"])
        if kind not in ("euclidean", "sphere", "hyperbolic"):
            raise InvalidInputError(f"unknown space kind {kind!r}")
        return cls(kind, int(obj["dim"]))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Vector in the tangent space at ``base`` (ambient-embedded)."""

    base: np.ndarray
    components: np.ndarray


def _minkowski_dot(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def validate_point(space, p, name="point"):
    """Check the Point invariants for ``space``; returns p as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (space.ambient_dim,):
        raise InvalidInputError(
            f"{name}: expected shape ({space.ambient_dim},), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"{name}: non-finite coordinates")
    if space.kind == "sphere":
        err = abs(np.dot(p, p) - 1.0)
        if err > 1e-12:
            raise InvariantViolationError(
                f"{name}: sphere embedding norm off by {err:.3e}")
    elif space.kind == "hyperbolic":
        err = abs(_minkowski_dot(p, p) + 1.0)
        if err > 1e-12 or p[0] <= 0:
            raise InvariantViolationError(
                f"{name}: not on the upper hyperboloid (defect {err:.3e})")
    elif space.kind == "torus":
        per = space.periods_array
        if np.any(p < 0) or np.any(p >= per):
            raise InvariantViolationError(
                f"{name}: torus coordinates outside [0, period)")
    return p


def wrap_torus(space, coords):
    """Reduce coordinates into the fundamental domain [0, period)."""
    return np.mod(coords, space.periods_array)


def _clamped_arccos(c, slack=TRANSCENDENTAL_SLACK, what="arccos argument"):
    if c > 1.0 + slack or c < -1.0 - slack:
        raise InvariantViolationError(f"{what} {c!r} outside [-1, 1]")
    return math.acos(min(1.0, max(-1.0, c)))


def distance(space, p, q):
    """Geodesic distance between two points of ``space``.

    Sphere and hyperboloid distances use chord-based formulas
    (2 asin / 2 asinh of the half chord), which stay accurate near zero
    where arccos/arccosh lose eight digits.
    """
    p = validate_point(space, p, "p")
    q = validate_point(space, q, "q")
    if space.kind == "euclidean":
        return float(np.linalg.norm(p - q))
    if space.kind == "sphere":
        dot = float(np.dot(p, q))
        if dot > 1.0 + TRANSCENDENTAL_SLACK or dot < -1.0 - TRANSCENDENTAL_SLACK:
            raise InvariantViolationError(
                f"sphere inner product {dot!r} outside [-1, 1]")
        if dot >= 0.0:
            return 2.0 * math.asin(min(1.0, float(np.linalg.norm(p - q)) / 2))
        return 2.0 * math.acos(min(1.0, float(np.linalg.norm(p + q)) / 2))
    if space.kind == "hyperbolic":
        m = float(-_minkowski_dot(p, q))
        if m < 1.0 - TRANSCENDENTAL_SLACK:
            raise InvariantViolationError(
                f"hyperboloid inner product {m!r} below 1")
        diff = p - q
        s = float(np.dot(diff[1:], diff[1:]) - diff[0] * diff[0])
        return 2.0 * math.asinh(math.sqrt(max(0.0, s)) / 2.0)
    per = space.periods_array
    d = np.abs(p - q) % per
    d = np.minimum(d, per - d)
    return float(np.linalg.norm(d))


def pairwise_distances(space, X, Y=None):
    """Distance matrix between rows of X and rows of Y (default X)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = X if Y is None else np.ascontiguousarray(Y, dtype=np.float64)
    return kernels.cdist(space.kind_code, X, Y, space.periods_array)


def distances_to(space, X, y):
    """Distances from each row of X to the single point y."""
    return kernels.dists_to_point(
        space.kind_code, np.ascontiguousarray(X, dtype=np.float64),
        np.asarray(y, dtype=np.float64), space.periods_array)


def injectivity_radius(space, p=None):
    """Injectivity radius (constant over each model space)."""
    if space.kind == "sphere":
        return math.pi
    if space.kind == "torus":
        return min(space.periods) / 2.0
    return math.inf


def log_map(space, base, target):
    """Tangent vector at ``base`` whose exponential is ``target``.

    Raises DomainError when ``target`` is at or beyond the injectivity
    radius (sphere antipode, torus cut locus).
    """
    base = validate_point(space, base, "base")
    target = validate_point(space, target, "target")
    d = distance(space, base, target)
    if d >= injectivity_radius(space):
        raise DomainError(
            f"target at distance {d} is not within the injectivity radius")
    if space.kind == "euclidean":
        return TangentVector(base, target - base)
    if space.kind == "sphere":
        if d < 1e-14:
            return TangentVector(base, np.zeros_like(base))
        v = target - math.cos(d) * base
        return TangentVector(base, v * (d / math.sin(d)))
    if space.kind == "hyperbolic":
        if d < 1e-14:
            return TangentVector(base, np.zeros_like(base))
        v = target - math.cosh(d) * base
        return TangentVector(base, v * (d / math.sinh(d)))
    per = space.periods_array
    diff = np.mod(target - base + per / 2.0, per) - per / 2.0
    return TangentVector(base, diff)


def exp_map(space, base, vector):
    """Exponential map: follow the geodesic from ``base`` along ``vector``.

    Accepts a TangentVector or a raw component array.  Outputs are
    re-projected onto the embedded manifold to suppress roundoff drift.
    """
    comps = vector.components if isinstance(vector, TangentVector) else vector
    comps = np.asarray(comps, dtype=np.float64)
    base = np.asarray(base, dtype=np.float64)
    if space.kind == "euclidean":
        return base + comps
    if space.kind == "torus":
        return wrap_torus(space, base + comps)
    if space.kind == "sphere":
        t = float(np.linalg.norm(comps))
        if t < 1e-300:
            return base.copy()
        out = math.cos(t) * base + math.sin(t) * (comps / t)
        return out / np.linalg.norm(out)
    t2 = float(_minkowski_dot(comps, comps))
    if t2 <= 0.0:
        if t2 < -1e-18:
            raise InvalidInputError("hyperbolic tangent vector is not spacelike")
        return base.copy()
    t = math.sqrt(t2)
    out = math.cosh(t) * base + math.sinh(t) * (comps / t)
    return out / math.sqrt(max(1e-300, -_minkowski_dot(out, out)))


def exp_map_many(space, base, components):
    """Exponential map of many tangent vectors (rows) at one base point."""
    comps = np.atleast_2d(np.asarray(components, dtype=np.float64))
    base = np.asarray(base, dtype=np.float64)
    if space.kind == "euclidean":
        return base[None, :] + comps
    if space.kind == "torus":
        return wrap_torus(space, base[None, :] + comps)
    if space.kind == "sphere":
        t = np.linalg.norm(comps, axis=1)
        safe = np.where(t > 0.0, t, 1.0)
        out = np.cos(t)[:, None] * base[None, :] \
            + np.sin(t)[:, None] * comps / safe[:, None]
        return out / np.linalg.norm(out, axis=1, keepdims=True)
    t = np.sqrt(np.maximum(0.0, _minkowski_dot(comps, comps)))
    safe = np.where(t > 0.0, t, 1.0)
    out = np.cosh(t)[:, None] * base[None, :] \
        + np.sinh(t)[:, None] * comps / safe[:, None]
    return out / np.sqrt(np.maximum(1e-300, -_minkowski_dot(out, out)))[:, None]


def tangent_inner(space, base, u, v):
    """Riemannian inner product of two tangent vectors at ``base``."""
    u = u.components if isinstance(u, TangentVector) else np.asarray(u)
    v = v.components if isinstance(v, TangentVector) else np.asarray(v)
    if space.kind == "hyperbolic":
        return float(_minkowski_dot(u, v))
    return float(np.dot(u, v))


def tangent_norm(space, base, u):
    return math.sqrt(max(0.0, tangent_inner(space, base, u, u)))


def angle_at(space, base, p, q):
    """Angle in [0, pi] between the geodesic rays base->p and base->q."""
    base = validate_point(space, base, "base")
    u = log_map(space, base, p)
    v = log_map(space, base, q)
    nu = tangent_norm(space, base, u)
    nv = tangent_norm(space, base, v)
    if nu < 1e-14 or nv < 1e-14:
        raise DomainError("angle_at needs both points distinct from base")
    c = tangent_inner(space, base, u, v) / (nu * nv)
    return _clamped_arccos(c, what="angle cosine")


def deformed_angle(dki, dkj, dij):
    """Euclidean law-of-cosines angle from three pairwise geodesic lengths."""
    if dki <= 0 or dkj <= 0 or dij < 0:
        raise InvalidTripleError(
            f"side lengths ({dki}, {dkj}, {dij}) out of range")
    c = (dki * dki + dkj * dkj - dij * dij) / (2.0 * dki * dkj)
    if c > 1.0 + TRANSCENDENTAL_SLACK or c < -1.0 - TRANSCENDENTAL_SLACK:
        raise InvalidTripleError(
            f"lengths ({dki}, {dkj}, {dij}) violate the triangle inequality")
    return math.acos(min(1.0, max(-1.0, c)))


def _unit_sphere_area(n):
    """Surface area of the unit sphere S^{n-1} inside R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def euclidean_ball_volume(n, r):
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0) * r ** n


def ball_volume(space, r):
    """Riemannian volume of the open geodesic ball of radius r.

    Closed forms for n <= 3 on the curved spaces, adaptive quadrature of the
    polar Jacobian (relative error <= 1e-10) for n >= 4.
    """
    if not (r > 0):
        raise DomainError(f"ball radius must be positive, got {r}")
    if r > injectivity_radius(space) * (1.0 + EXACT_SLACK):
        raise DomainError(
            f"radius {r} exceeds the injectivity radius of the space")
    n = space.dim
    if space.kind in ("euclidean", "torus"):
        return euclidean_ball_volume(n, r)
    if space.kind == "sphere":
        if n == 1:
            return 2.0 * r
        if n == 2:
            return 2.0 * math.pi * (1.0 - math.cos(r))
        if n == 3:
            return math.pi * (2.0 * r - math.sin(2.0 * r))
        integral, _ = quad(lambda t: math.sin(t) ** (n - 1), 0.0, r,
                           epsabs=0.0, epsrel=1e-12, limit=200)
    else:
        if n == 1:
            return 2.0 * r
        if n == 2:
            return 2.0 * math.pi * (math.cosh(r) - 1.0)
        if n == 3:
            return math.pi * (math.sinh(2.0 * r) - 2.0 * r)
        integral, _ = quad(lambda t: math.sinh(t) ** (n - 1), 0.0, r,
                           epsabs=0.0, epsrel=1e-12, limit=200)
    return _unit_sphere_area(n) * integral


def total_volume(space):
    """Total Riemannian volume (compact spaces only)."""
    if space.kind == "sphere":
        return ball_volume(space, math.pi)
    if space.kind == "torus":
        return float(np.prod(space.periods_array))
    raise DomainError(f"{space.kind} space has infinite volume")


def radial_jacobian(space, t):
    """Polar-coordinate volume density t^{n-1} / sin^{n-1} t / sinh^{n-1} t."""
    n = space.dim
    t = np.asarray(t, dtype=np.float64)
    if space.kind == "sphere":
        return np.sin(t) ** (n - 1)
    if space.kind == "hyperbolic":
        return np.sinh(t) ** (n - 1)
    return t ** (n - 1)


def tangent_basis(space, p):
    """Rows form an orthonormal basis of the tangent space at p.

    Orthonormal in the metric at p: Euclidean for sphere/flat spaces,
    Minkowski-restricted for the hyperboloid (positive definite there).
    """
    n, amb = space.dim, space.ambient_dim
    if space.kind in ("euclidean", "torus"):
        return np.eye(n)
    if space.kind == "sphere":
        def inner(u, v):
            return float(np.dot(u, v))

        def project(v):
            return v - np.dot(v, p) * p
    else:
        def inner(u, v):
            return float(_minkowski_dot(u, v))

        def project(v):
            return v + _minkowski_dot(v, p) * p

    basis = []
    for i in range(amb):
        v = project(np.eye(amb)[i])
        for b in basis:
            v = v - inner(v, b) * b
        nv = inner(v, v)
        if nv > 1e-12:
            basis.append(v / math.sqrt(nv))
        if len(basis) == n:
            break
    if len(basis) != n:
        raise InvariantViolationError("failed to build a tangent basis")
    return np.array(basis)


def _radial_cdf_sampler(space, r, n_grid=4097):
    """Inverse radial CDF for uniform-in-ball sampling, as a callable on u."""
    n = space.dim
    if space.kind in ("euclidean", "torus"):
        return lambda u: r * u ** (1.0 / n)
    ts = np.linspace(0.0, r, n_grid)
    dens = radial_jacobian(space, ts)
    cum = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5)))
    cum /= cum[-1]
    return lambda u: np.interp(u, cum, ts)


def sample_ball(space, center, r, rng, size=None):
    """Uniform samples w.r.t. Riemannian volume in the open ball D_r(center).

    Radial inverse-CDF times a uniform tangent direction, pushed through the
    exponential map.  Returns one point when ``size`` is None, else an
    (size, ambient_dim) array.  Only the caller-supplied ``rng`` is mutated.
    """
    center = validate_point(space, center, "center")
    if r > injectivity_radius(space) * (1.0 + EXACT_SLACK):
        raise DomainError("sampling radius exceeds the injectivity radius")
    m = 1 if size is None else int(size)
    inv_cdf = _radial_cdf_sampler(space, r)
    # nextafter keeps the samples strictly inside the open ball
    t = inv_cdf(rng.uniform(0.0, np.nextafter(1.0, 0.0), m))
    g = rng.normal(size=(m, space.dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    dirs = (g / norms) @ tangent_basis(space, center)
    if space.kind == "euclidean":
        pts = center + t[:, None] * dirs
    elif space.kind == "torus":
        pts = wrap_torus(space, center + t[:, None] * dirs)
    elif space.kind == "sphere":
        pts = np.cos(t)[:, None] * center + np.sin(t)[:, None] * dirs
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    else:
        pts = np.cosh(t)[:, None] * center + np.sinh(t)[:, None] * dirs
        pts /= np.sqrt(-_minkowski_dot(pts, pts))[:, None]
    return pts[0] if size is None else pts


def space_origin(space):
    """A canonical base point (north pole / hyperboloid apex / zero)."""
    if space.kind == "sphere":
        out = np.zeros(space.ambient_dim)
        out[-1] = 1.0
        return out
    if space.kind == "hyperbolic":
        out = np.zeros(space.ambient_dim)
        out[0] = 1.0
        return out
    return np.zeros(space.dim)


def random_points(space, m, rng, extent=1.0):
    """m points spread over a bounded patch of the space (test fixtures).

    Euclidean: uniform in [0, extent]^n; sphere: uniform on S^n; hyperbolic:
    exponential image of tangent vectors with radius uniform in [0, extent];
    torus: uniform in the fundamental domain.
    """
    if space.kind == "euclidean":
        return rng.uniform(0.0, extent, (m, space.dim))
    if space.kind == "torus":
        return rng.uniform(0.0, 1.0, (m, space.dim)) * space.periods_array
    if space.kind == "sphere":
        g = rng.normal(size=(m, space.ambient_dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    origin = space_origin(space)
    basis = tangent_basis(space, origin)
    g = rng.normal(size=(m, space.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    t = rng.uniform(0.0, extent, (m, 1))
    dirs = g @ basis
    pts = np.cosh(t) * origin + np.sinh(t) * dirs
    return pts / np.sqrt(-_minkowski_dot(pts, pts))[:, None]


def point_to_json(p):
    return [float(x) for x in np.asarray(p)]


def point_from_json(space, obj, name="point"):
    return validate_point(space, np.asarray(obj, dtype=np.float64), name)
