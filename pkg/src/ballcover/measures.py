"""Locally finite Borel measures as computable objects.

Two variants: atomic measures (finite weighted point clouds, evaluated
exactly) and density measures w.r.t. Riemannian volume (geodesic polar
quadrature or Monte Carlo).  Ball and region masses use open-ball semantics
throughout; every approximate value carries an error estimate.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import geometry, kernels
from .covering import GeodesicBall
from .errors import DomainError, InvalidInputError, InvalidMeasureError
from .geometry import EXACT_SLACK


@dataclass(frozen=True)
class IntegrationConfig:
    method: str = "polar_quadrature"     # or "monte_carlo"
    sample_count: int = 20000
    quadrature_order: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("polar_quadrature", "monte_carlo"):
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.sample_count < 1 or self.quadrature_order < 1:
            raise InvalidInputError("sample_count/quadrature_order must be >= 1")

    def to_json(self):
        return {"method": self.method, "sample_count": self.sample_count,
                "quadrature_order": self.quadrature_order, "seed": self.seed}

    @classmethod
    def from_json(cls, obj):
        return cls(**{k: obj[k] for k in
                      ("method", "sample_count", "quadrature_order", "seed")
                      if k in obj})


@dataclass(frozen=True)
class MassValue:
    """Mass of a set, with error_estimate == 0 iff evaluated exactly."""

    value: float
    error_estimate: float = 0.0

    def to_json(self):
        return {"value": self.value, "error_estimate": self.error_estimate}


class AtomicMeasure:
    """Finite weighted point cloud; all evaluations are exact."""

    def __init__(self, space, points, weights):
        self.space = space
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        if self.points.ndim != 2 or \
                self.points.shape[0] != self.weights.shape[0]:
            raise InvalidInputError("points/weights shape mismatch")
        if np.any(self.weights < 0.0):
            raise InvalidInputError("atomic weights must be nonnegative")
        for i in range(self.points.shape[0]):
            geometry.validate_point(space, self.points[i], f"atom {i}")

    def __len__(self):
        return self.points.shape[0]

    def total_mass(self):
        return float(self.weights.sum())

    def scaled(self, h):
        """New measure with weights h(p_i) * w_i (h scalar or callable).

        This is the constructive absolute-continuity recipe: the result
        vanishes on every null set of the original.
        """
        if callable(h):
            factors = np.array([float(h(p)) for p in self.points])
        else:
            factors = np.full(len(self), float(h))
        if np.any(factors < 0.0):
            raise InvalidMeasureError("scaling function must be nonnegative")
        return AtomicMeasure(self.space, self.points,
                             factors * self.weights)

    def separation_radius(self):
        """Smallest positive pairwise atom distance (inf for < 2 atoms)."""
        if len(self) < 2:
            return math.inf
        d = geometry.pairwise_distances(self.space, self.points)
        ii, jj = np.triu_indices(len(self), k=1)
        vals = d[ii, jj]
        vals = vals[vals > 0.0]
        return float(vals.min()) if vals.size else math.inf

    def to_json(self):
        return {"kind": "atomic",
                "points": [geometry.point_to_json(p) for p in self.points],
                "weights": [float(w) for w in self.weights]}


class DensityMeasure:
    """Density w.r.t. Riemannian volume, integrated per its own config."""

    def __init__(self, space, density, integration=None, name=None,
                 params=None):
        self.space = space
        self.density = density
        self.integration = integration or IntegrationConfig()
        self.name = name
        self.params = params or {}

    def density_at(self, points):
        points = np.asarray(points, dtype=np.float64)
        vals = np.asarray(self.density(points), dtype=np.float64)
        if np.any(vals < -1e-12):
            raise InvalidMeasureError(
                f"density went negative (min {vals.min():.3e})")
        return np.maximum(vals, 0.0)

    def with_integration(self, integration):
        return DensityMeasure(self.space, self.density, integration,
                              self.name, self.params)

    def to_json(self):
        return {"kind": "density", "name": self.name, "params": self.params,
                "integration": self.integration.to_json()}


# --- built-in density registry ---------------------------------------------

def _density_constant(params):
    value = float(params.get("value", 1.0))
    return lambda pts: np.full(np.asarray(pts).shape[0], value)


def _density_affine(params):
    a = np.asarray(params["a"], dtype=np.float64)
    b = float(params.get("b", 0.0))
    return lambda pts: np.asarray(pts) @ a + b


def _density_poly(params):
    terms = [(float(t["coef"]), np.asarray(t["powers"], dtype=np.float64))
             for t in params["terms"]]

    def f(pts):
        pts = np.asarray(pts, dtype=np.float64)
        out = np.zeros(pts.shape[0])
        for coef, powers in terms:
            out += coef * np.prod(pts ** powers, axis=1)
        return out

    return f


DENSITY_REGISTRY = {
    "constant": _density_constant,
    "affine": _density_affine,
    "poly": _density_poly,
}


def density_from_spec(space, spec, integration=None):
    name = spec.get("name")
    if name not in DENSITY_REGISTRY:
        raise InvalidInputError(f"unknown density {name!r}; "
                                f"known: {sorted(DENSITY_REGISTRY)}")
    params = spec.get("params", {})
    integ = integration
    if integ is None and "integration" in spec:
        integ = IntegrationConfig.from_json(spec["integration"])
    return DensityMeasure(space, DENSITY_REGISTRY[name](params), integ,
                          name=name, params=params)


def volume_measure(space, integration=None):
    """Riemannian volume as a density measure with density 1."""
    return density_from_spec(space, {"name": "constant",
                                     "params": {"value": 1.0}}, integration)


def load_atomic_csv(space, path):
    """One row per atom: ambient coordinates then the weight."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                continue        # header line
    if not rows:
        raise InvalidInputError(f"no atoms in {path}")
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[1] != space.ambient_dim + 1:
        raise InvalidInputError(
            f"rows need {space.ambient_dim} coordinates plus a weight")
    return AtomicMeasure(space, arr[:, :-1], arr[:, -1])


def measure_from_json(space, obj):
    kind = obj.get("kind")
    if kind == "atomic":
        if "csv" in obj:
            return load_atomic_csv(space, obj["csv"])
        return AtomicMeasure(space, np.asarray(obj["points"], dtype=float),
                             np.asarray(obj["weights"], dtype=float))
    if kind == "density":
        return density_from_spec(space, obj)
    raise InvalidInputError(f"unknown measure kind {kind!r}")


# --- geodesic-ball quadrature ----------------------------------------------

def _angular_rule(n, order):
    """Directions and weights integrating over the unit sphere S^{n-1}."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        m = max(8, 2 * order)
        phi = 2.0 * math.pi * np.arange(m) / m
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return dirs, np.full(m, 2.0 * math.pi / m)
    sub_dirs, sub_w = _angular_rule(n - 1, order)
    x, w = np.polynomial.legendre.leggauss(max(4, order))
    theta = 0.5 * math.pi * (x + 1.0)
    wt = 0.5 * math.pi * w * np.sin(theta) ** (n - 2)
    first = np.repeat(np.cos(theta), len(sub_w))[:, None]
    rest = (np.sin(theta)[:, None, None]
            * sub_dirs[None, :, :]).reshape(-1, n - 1)
    return np.concatenate([first, rest], axis=1), np.outer(wt, sub_w).ravel()


def _ball_rule(space, r, order):
    """Quadrature nodes (as radius/direction pairs) and combined weights."""
    x, w = np.polynomial.legendre.leggauss(max(4, order))
    t = 0.5 * r * (x + 1.0)
    wt = 0.5 * r * w * geometry.radial_jacobian(space, t)
    dirs, wa = _angular_rule(space.dim, order)
    weights = np.outer(wt, wa).ravel()
    return t, dirs, weights


def _ball_nodes(space, centers, t, dirs):
    """Ambient quadrature nodes exp_c(t_i * u_j) for every center row."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    G = centers.shape[0]
    nt, nd = len(t), dirs.shape[0]
    if space.kind in ("euclidean", "torus"):
        offs = t[:, None, None] * dirs[None, :, :]       # (nt, nd, n)
        nodes = centers[:, None, None, :] + offs[None]
        if space.kind == "torus":
            nodes = np.mod(nodes, space.periods_array)
        return nodes.reshape(G, nt * nd, -1)
    bases = np.stack([geometry.tangent_basis(space, c) for c in centers])
    amb_dirs = np.einsum("dj,gja->gda", dirs, bases)     # (G, nd, amb)
    if space.kind == "sphere":
        ct, st = np.cos(t), np.sin(t)
        nodes = ct[None, :, None, None] * centers[:, None, None, :] \
            + st[None, :, None, None] * amb_dirs[:, None, :, :]
        nodes /= np.linalg.norm(nodes, axis=-1, keepdims=True)
    else:
        ct, st = np.cosh(t), np.sinh(t)
        nodes = ct[None, :, None, None] * centers[:, None, None, :] \
            + st[None, :, None, None] * amb_dirs[:, None, :, :]
        norm = np.sqrt(nodes[..., 0] ** 2
                       - np.sum(nodes[..., 1:] ** 2, axis=-1))
        nodes /= norm[..., None]
    return nodes.reshape(G, nt * dirs.shape[0], -1)


def _quadrature_masses(measure, space, centers, r, order, rel_target=1e-8,
                       max_order=96):
    """Ball masses for many centers at one radius, with refinement estimate."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))

    def evaluate(o):
        t, dirs, wts = _ball_rule(space, r, o)
        nodes = _ball_nodes(space, centers, t, dirs)
        G, Q, amb = nodes.shape
        dens = measure.density_at(nodes.reshape(G * Q, amb)).reshape(G, Q)
        return dens @ wts

    order = max(4, order)
    vals = evaluate(order)
    while True:
        next_order = min(max_order, 2 * order)
        new_vals = evaluate(next_order)
        err = np.abs(new_vals - vals)
        vals = new_vals
        scale = np.maximum(np.abs(vals), 1e-300)
        if next_order >= max_order or np.all(err <= rel_target * scale):
            return vals, err
        order = next_order


def _worker_seeds(seed, workers):
    return [np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, i])
            for i in range(workers)]


def _chunk_sizes(total, workers):
    base, extra = divmod(total, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def _monte_carlo_ball(measure, space, ball, workers):
    cfg = measure.integration
    vol = geometry.ball_volume(space, ball.radius)
    rngs = _worker_seeds(cfg.seed, max(1, workers))
    sizes = _chunk_sizes(cfg.sample_count, len(rngs))
    total, total_sq, n = 0.0, 0.0, 0
    for rng, size in zip(rngs, sizes):
        if size == 0:
            continue
        pts = geometry.sample_ball(space, ball.center, ball.radius, rng,
                                   size=size)
        vals = measure.density_at(pts)
        total += float(vals.sum())
        total_sq += float((vals ** 2).sum())
        n += size
    mean = total / n
    var = max(0.0, total_sq / n - mean * mean)
    stderr = math.sqrt(var / n)
    return MassValue(vol * mean, 3.0 * vol * stderr)


def ball_mass(measure, space, ball, workers=1):
    """Mass of the open geodesic ball under the measure.

    Atomic: exact weighted count (strict inequality).  Density: geodesic
    polar quadrature or Monte Carlo, per the measure's integration config.
    """
    if ball.radius > geometry.injectivity_radius(space) * (1 + EXACT_SLACK):
        raise DomainError("ball radius exceeds the injectivity radius")
    if isinstance(measure, AtomicMeasure):
        vals = kernels.mass_within(
            space.kind_code, measure.points, measure.weights,
            ball.center[None, :], np.array([ball.radius]),
            space.periods_array)
        return MassValue(float(vals[0]), 0.0)
    cfg = measure.integration
    if cfg.method == "monte_carlo":
        return _monte_carlo_ball(measure, space, ball, workers)
    vals, errs = _quadrature_masses(measure, space, ball.center, ball.radius,
                                    cfg.quadrature_order)
    return MassValue(float(vals[0]), float(errs[0]))


def ball_masses_at(measure, space, centers, radius, workers=1):
    """Vectorized ball_mass over many centers sharing one radius.

    Returns (values, error_estimates) arrays; the hot path behind ladder
    evaluation on grids.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if isinstance(measure, AtomicMeasure):
        vals = kernels.mass_within(
            space.kind_code, measure.points, measure.weights, centers,
            np.full(centers.shape[0], float(radius)), space.periods_array)
        return vals, np.zeros_like(vals)
    cfg = measure.integration
    if cfg.method == "monte_carlo":
        out = [_monte_carlo_ball(measure, space, GeodesicBall(c, radius),
                                 workers) for c in centers]
        return (np.array([m.value for m in out]),
                np.array([m.error_estimate for m in out]))
    return _quadrature_masses(measure, space, centers, radius,
                              cfg.quadrature_order)


@dataclass
class Region:
    """Membership predicate with a bounding ball (and volume when known).

    ``bounding_ball`` may be None on compact spaces (sphere, torus), in
    which case Monte Carlo sampling covers the whole space.
    """

    contains: callable
    bounding_ball: GeodesicBall
    volume: float = None
    description: dict = None

    def indicator(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.asarray(self.contains(points), dtype=bool)
        if out.shape != (points.shape[0],):
            raise InvalidInputError("region predicate must map (m, d) -> (m,)")
        return out


def box_region(space, lo, hi, pad=1e-9):
    """Axis-aligned closed box in flat coordinates, with exact volume."""
    if space.kind not in ("euclidean", "torus"):
        raise InvalidInputError("box regions need flat coordinates")
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    center = (lo + hi) / 2.0
    radius = float(np.linalg.norm(hi - lo) / 2.0) * (1.0 + 1e-6) + pad
    ball = GeodesicBall(center, radius)
    if space.kind == "torus":
        if radius > geometry.injectivity_radius(space):
            ball = None          # box wider than any ball; sample the torus
        else:
            ball = GeodesicBall(geometry.wrap_torus(space, center), radius)

    def contains(pts):
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    return Region(contains, ball, volume=float(np.prod(hi - lo)),
                  description={"kind": "box", "lo": lo.tolist(),
                               "hi": hi.tolist()})


def ball_region(space, center, radius):
    ball = GeodesicBall(np.asarray(center, dtype=np.float64), float(radius))

    def contains(pts):
        return geometry.distances_to(space, pts, ball.center) < ball.radius

    return Region(contains, ball, volume=geometry.ball_volume(space, radius),
                  description={"kind": "ball",
                               "center": geometry.point_to_json(center),
                               "radius": float(radius)})


def region_from_json(space, obj):
    kind = obj.get("kind")
    if kind == "box":
        return box_region(space, obj["lo"], obj["hi"])
    if kind == "ball":
        return ball_region(space, np.asarray(obj["center"], dtype=float),
                           float(obj["radius"]))
    raise InvalidInputError(f"unknown region kind {kind!r}")


def region_mass(measure, space, region, workers=1):
    """Measure of the region; exact for atomic, Monte Carlo for densities."""
    if isinstance(measure, AtomicMeasure):
        if len(measure) == 0:
            return MassValue(0.0, 0.0)
        mask = region.indicator(measure.points)
        return MassValue(float(measure.weights[mask].sum()), 0.0)
    cfg = measure.integration
    ball = region.bounding_ball
    if ball is None:
        vol = geometry.total_volume(space)

        def draw(rng, size):
            return geometry.random_points(space, size, rng)
    else:
        vol = geometry.ball_volume(space, ball.radius)

        def draw(rng, size):
            return geometry.sample_ball(space, ball.center, ball.radius,
                                        rng, size=size)

    rngs = _worker_seeds(cfg.seed, max(1, workers))
    sizes = _chunk_sizes(cfg.sample_count, len(rngs))
    total, total_sq, n = 0.0, 0.0, 0
    for rng, size in zip(rngs, sizes):
        if size == 0:
            continue
        pts = draw(rng, size)
        vals = measure.density_at(pts) * region.indicator(pts)
        total += float(vals.sum())
        total_sq += float((vals ** 2).sum())
        n += size
    mean = total / n
    var = max(0.0, total_sq / n - mean * mean)
    return MassValue(vol * mean, 3.0 * vol * math.sqrt(var / n))


@dataclass
class SemicontinuityRecord:
    passed: bool
    base_mass: MassValue
    approach_masses: list
    qualifying: list
    tolerance: float
    violations: list

    def to_json(self):
        return {
            "report": "semicontinuity_probe",
            "passed": self.passed,
            "base_mass": self.base_mass.to_json(),
            "approach_masses": [m.to_json() for m in self.approach_masses],
            "qualifying": self.qualifying,
            "tolerance": self.tolerance,
            "violations": self.violations,
        }


def semicontinuity_probe(measure, space, r, x, approach, workers=1):
    """Finite-resolution check that ball mass cannot drop in the limit.

    For atomic measures the qualifying approach points are those closer to x
    than the smallest slack r - d(atom, x) over atoms inside the ball; for
    such points inclusion of every counted atom is a triangle-inequality
    fact and the comparison is exact.  Density measures use the final third
    of the approach sequence with the summed error estimates as tolerance.
    """
    x = geometry.validate_point(space, x, "x")
    base = ball_mass(measure, space, GeodesicBall(x, r), workers)
    masses = [ball_mass(measure, space, GeodesicBall(np.asarray(y, float), r),
                        workers) for y in approach]
    dists = [geometry.distance(space, x, np.asarray(y, float))
             for y in approach]
    if isinstance(measure, AtomicMeasure):
        d_atoms = geometry.distances_to(space, measure.points, x)
        inside = d_atoms[d_atoms < r]
        gap = float((r - inside).min()) if inside.size else math.inf
        qualifying = [m for m, d in enumerate(dists)
                      if d < gap - EXACT_SLACK]
        tolerance = 0.0
    else:
        start = max(0, len(approach) - max(1, len(approach) // 3))
        qualifying = list(range(start, len(approach)))
        tolerance = base.error_estimate + sum(
            masses[m].error_estimate for m in qualifying)
    violations = [[m, masses[m].value, base.value] for m in qualifying
                  if masses[m].value < base.value - tolerance]
    return SemicontinuityRecord(not violations, base, masses, qualifying,
                                tolerance, violations)
