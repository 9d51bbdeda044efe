"""Measure differentiation via shrinking geodesic-ball mass ratios.

Ball-ratio ladders approximate the derivative of one measure with respect
to another; estimates are classified (converged / divergent / oscillating /
undefined), Richardson-extrapolated when converged, and set to zero
otherwise so that integrating the reported values against the base measure
reproduces the differentiated measure.  The Vitali fill extracts disjoint
balls capturing a target set with geometrically decaying residual mass.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import geometry, kernels
from .covering import BallFamily, GeodesicBall, color, greedy_select, \
    overlap_sets, verify_disjoint
from .errors import DomainError, InvalidInputError
from .measures import AtomicMeasure, MassValue, ball_mass, ball_masses_at, \
    region_mass

RATIO_REL_TOL = 1e-3
DIVERGENCE_CEILING = 1e9
OSCILLATION_GAP_TOL = 0.1

STATUS_CONVERGED = "converged"
STATUS_DIVERGENT = "divergent"
STATUS_OSCILLATING = "oscillating"
STATUS_ZERO_DENOM = "undefined_zero_denominator"


@dataclass(frozen=True)
class RadiusLadder:
    """Geometric radius schedule r0 * factor^k, k = 0..depth-1."""

    r0: float
    factor: float = 0.5
    depth: int = 6

    def __post_init__(self):
        if self.r0 <= 0:
            raise InvalidInputError("ladder r0 must be positive")
        if not (0.0 < self.factor < 1.0):
            raise InvalidInputError("ladder factor must lie in (0, 1)")
        if self.depth < 3:
            raise InvalidInputError("ladder depth must be at least 3")

    @property
    def radii(self):
        return self.r0 * self.factor ** np.arange(self.depth)

    def floor(self):
        return float(self.r0 * self.factor ** (self.depth - 1))

    def to_json(self):
        return {"r0": self.r0, "factor": self.factor, "depth": self.depth}

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["r0"]), float(obj.get("factor", 0.5)),
                   int(obj.get("depth", 6)))


def default_ladder(space):
    inj = geometry.injectivity_radius(space)
    return RadiusLadder(min(0.2, inj / 8.0), 0.5, 6)


@dataclass(frozen=True)
class ClassifierConfig:
    """Thresholds for classifying a finite ratio ladder."""

    rel_tol: float = RATIO_REL_TOL
    ceiling: float = DIVERGENCE_CEILING
    gap_tol: float = OSCILLATION_GAP_TOL

    def to_json(self):
        return {"rel_tol": self.rel_tol, "ceiling": self.ceiling,
                "gap_tol": self.gap_tol}


@dataclass
class DensityEstimate:
    """Ladder of ball-mass ratios at one point, with its classification.

    ``extrapolated`` is the Richardson limit when converged and 0 otherwise
    (the convention that makes the reported function integrate correctly
    even where the ladder does not settle).
    """

    point: np.ndarray
    radii: list
    ratios: list                 # (value, error_estimate) pairs
    zero_denominator: list       # rung indices where the base mass vanished
    extrapolated: float
    status: str

    def to_json(self):
        def num(x):
            x = float(x)
            return None if math.isnan(x) else x

        return {
            "point": geometry.point_to_json(self.point),
            "radii": [float(r) for r in self.radii],
            "ratios": [[num(v), num(e)] for v, e in self.ratios],
            "zero_denominator": self.zero_denominator,
            "extrapolated": float(self.extrapolated),
            "status": self.status,
        }


def _check_ladder_proper(space, ladder):
    if 4.0 * ladder.r0 > geometry.injectivity_radius(space) * (1 + 1e-12):
        raise DomainError("ladder r0 is not 4-proper on this space")


def ratio_ladder(nu1, nu2, space, x, ladder, workers=1):
    """Mass ratios nu2(D_r(x)) / nu1(D_r(x)) along the ladder.

    Returns (radii, ratios, errors, zero_denominator_flags); rungs with a
    vanishing base mass are flagged rather than divided.
    """
    _check_ladder_proper(space, ladder)
    x = geometry.validate_point(space, x, "x")
    radii = ladder.radii
    ratios, errors, flags = [], [], []
    for r in radii:
        m1 = ball_mass(nu1, space, GeodesicBall(x, float(r)), workers)
        m2 = ball_mass(nu2, space, GeodesicBall(x, float(r)), workers)
        if m1.value <= 0.0:
            ratios.append(math.nan)
            errors.append(math.nan)
            flags.append(True)
            continue
        tau = m2.value / m1.value
        rel = 0.0
        if m2.value != 0.0:
            rel += (m2.error_estimate / abs(m2.value)) ** 2
        rel += (m1.error_estimate / m1.value) ** 2
        ratios.append(tau)
        errors.append(abs(tau) * math.sqrt(rel)
                      + (m2.error_estimate / m1.value if m2.value == 0 else 0))
        flags.append(False)
    return list(map(float, radii)), ratios, errors, flags


def _classify(ratios, errors, flags, factor, config):
    """Classification and extrapolation shared by scalar and grid paths."""
    if any(flags):
        return STATUS_ZERO_DENOM, 0.0
    last3 = ratios[-3:]
    err3 = max(errors[-3:])
    window = max(3.0 * err3, config.rel_tol * abs(ratios[-1]))
    if max(last3) - min(last3) <= window:
        if ratios[-1] == ratios[-2]:
            return STATUS_CONVERGED, float(ratios[-1])
        f2 = factor * factor      # leading mass-ratio error term is O(r^2)
        return STATUS_CONVERGED, float(
            (ratios[-1] - f2 * ratios[-2]) / (1.0 - f2))
    if ratios[-1] > config.ceiling and ratios[-3] < ratios[-2] < ratios[-1]:
        return STATUS_DIVERGENT, 0.0
    return STATUS_OSCILLATING, 0.0


def differentiate(nu1, nu2, space, x, ladder, config=None, workers=1):
    """Ball-ratio derivative estimate of nu2 w.r.t. nu1 at x."""
    config = config or ClassifierConfig()
    radii, ratios, errors, flags = ratio_ladder(nu1, nu2, space, x, ladder,
                                                workers)
    status, extrapolated = _classify(ratios, errors, flags,
                                     ladder.factor, config)
    return DensityEstimate(np.asarray(x, dtype=np.float64), radii,
                           list(zip(ratios, errors)),
                           [i for i, f in enumerate(flags) if f],
                           extrapolated, status)


def differentiate_grid(nu1, nu2, space, points, ladder, config=None,
                       workers=1):
    """Vectorized differentiate over many points (shared ladder).

    Ball masses are evaluated per rung for the whole grid at once, which is
    the fast path for quadrature-backed density measures.
    """
    config = config or ClassifierConfig()
    _check_ladder_proper(space, ladder)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    radii = ladder.radii
    vals1 = np.empty((len(radii), points.shape[0]))
    errs1 = np.empty_like(vals1)
    vals2 = np.empty_like(vals1)
    errs2 = np.empty_like(vals1)
    for i, r in enumerate(radii):
        vals1[i], errs1[i] = ball_masses_at(nu1, space, points, float(r),
                                            workers)
        vals2[i], errs2[i] = ball_masses_at(nu2, space, points, float(r),
                                            workers)
    out = []
    for g in range(points.shape[0]):
        ratios, errors, flags = [], [], []
        for i in range(len(radii)):
            m1, m2 = vals1[i, g], vals2[i, g]
            if m1 <= 0.0:
                ratios.append(math.nan)
                errors.append(math.nan)
                flags.append(True)
                continue
            tau = m2 / m1
            rel = (errs1[i, g] / m1) ** 2
            if m2 != 0.0:
                rel += (errs2[i, g] / abs(m2)) ** 2
            ratios.append(float(tau))
            errors.append(abs(tau) * math.sqrt(rel)
                          + (errs2[i, g] / m1 if m2 == 0 else 0.0))
            flags.append(False)
        status, extrapolated = _classify(ratios, errors, flags,
                                         ladder.factor, config)
        out.append(DensityEstimate(points[g], list(map(float, radii)),
                                   list(zip(ratios, errors)),
                                   [i for i, f in enumerate(flags) if f],
                                   extrapolated, status))
    return out


def estimates_to_csv(estimates, path):
    """Grid export: coordinates, per-rung ratios, extrapolated value, status."""
    if not estimates:
        raise InvalidInputError("no estimates to export")
    dim = len(estimates[0].point)
    depth = len(estimates[0].radii)
    header = [f"x{i}" for i in range(dim)] \
        + [f"r{k}" for k in range(depth)] \
        + [f"ratio{k}" for k in range(depth)] \
        + [f"ratio_err{k}" for k in range(depth)] \
        + ["extrapolated", "status"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for est in estimates:
            row = [repr(float(c)) for c in est.point]
            row += [repr(float(r)) for r in est.radii]
            row += [repr(float(v)) for v, _ in est.ratios]
            row += [repr(float(e)) for _, e in est.ratios]
            row += [repr(float(est.extrapolated)), est.status]
            w.writerow(row)


# --- Vitali fill ------------------------------------------------------------

@dataclass
class FillResult:
    """Disjoint balls extracted round by round, with residual certificates."""

    disjoint_balls: list
    residual_per_round: list
    initial_mass: float
    L_used: int
    status: str                  # "complete" | "partial"
    stuck_atoms: int = 0
    rounds: int = 0

    def envelope(self):
        """Certified residual bound (1 - 1/(2 L))^p * initial mass."""
        q = 1.0 - 1.0 / (2.0 * max(1, self.L_used))
        return [self.initial_mass * q ** (p + 1)
                for p in range(len(self.residual_per_round))]

    def to_json(self):
        return {
            "report": "vitali_fill",
            "status": self.status,
            "initial_mass": self.initial_mass,
            "residual_per_round": self.residual_per_round,
            "decay_envelope": self.envelope(),
            "L_used": self.L_used,
            "rounds": self.rounds,
            "stuck_atoms": self.stuck_atoms,
            "balls": [b.to_json() for b in self.disjoint_balls],
        }


def _boundary_directions(dim, count):
    rng = np.random.default_rng(1234567)   # fixed set, same for every run
    g = rng.normal(size=(count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _ball_inside_region(space, center, radius, predicate, dirs_cache):
    """Finite-resolution D subset-of U0 test via boundary + center samples."""
    if predicate is None:
        return True
    dim = space.dim
    if dim not in dirs_cache:
        dirs_cache[dim] = _boundary_directions(dim, 64 * dim)
    dirs = dirs_cache[dim] @ geometry.tangent_basis(space, center)
    pts = np.vstack([center[None, :],
                     geometry.exp_map_many(space, center, radius * dirs)])
    return bool(np.all(predicate(pts)))


def vitali_fill(space, centers, ladder, mu, region_predicate=None,
                max_rounds=50):
    """Greedy extraction of disjoint balls capturing the atoms of mu.

    Each round restricts the per-center ladder family to balls inside the
    current region (the initial predicate minus all previously chosen open
    balls), covers the remaining atoms via greedy selection + coloring,
    keeps a minimal prefix of the best color class capturing at least half
    of its mass, and removes those balls from the region.  The per-round
    capture is then at least 1/(2 L) of the residual, giving the geometric
    decay certificate, as long as every remaining atom still has admissible
    balls; atoms that run out are reported as stuck.
    """
    if not isinstance(mu, AtomicMeasure):
        raise InvalidInputError("vitali_fill needs an atomic measure")
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    radii_ladder = ladder.radii
    if 4.0 * ladder.r0 > geometry.injectivity_radius(space) * (1 + 1e-12):
        raise DomainError("ladder r0 is not 4-proper on this space")

    # Target atoms: mu-support points that are centers and lie in U0.
    d_to_centers = geometry.pairwise_distances(space, mu.points, centers)
    is_center = (d_to_centers < 1e-12).any(axis=1)
    in_region = np.ones(len(mu), dtype=bool)
    if region_predicate is not None:
        in_region = np.asarray(region_predicate(mu.points), dtype=bool)
    target = is_center & in_region & (mu.weights > 0)
    initial_mass = float(mu.weights[target].sum())

    dirs_cache = {}
    chosen = []                  # GeodesicBall list, pairwise disjoint
    chosen_c = np.empty((0, space.ambient_dim))
    chosen_r = np.empty(0)
    uncovered = target.copy()
    residuals = []
    L_used = 1
    stuck = 0
    status = "complete"
    rounds = 0

    for _ in range(max_rounds):
        if not uncovered.any():
            break
        # Admissible balls: centered at uncovered atoms' centers, disjoint
        # from every chosen ball (exact metric criterion), inside U0.
        live_centers = []
        live_radii = []
        has_ball = {}
        for ci in np.nonzero(uncovered)[0]:
            c = mu.points[ci]
            if chosen_r.size:
                d_ch = geometry.distances_to(space, chosen_c, c)
            else:
                d_ch = np.empty(0)
            ok_any = False
            for r in radii_ladder:
                r = float(r)
                if chosen_r.size and np.any(d_ch < chosen_r + r):
                    continue
                if not _ball_inside_region(space, c, r, region_predicate,
                                           dirs_cache):
                    continue
                live_centers.append(c)
                live_radii.append(r)
                ok_any = True
            has_ball[ci] = ok_any
        if not live_centers:
            status = "partial"
            stuck = int(uncovered.sum())
            break
        round_stuck = sum(1 for v in has_ball.values() if not v)

        family = BallFamily(space, np.asarray(live_centers),
                            np.asarray(live_radii))
        selection = greedy_select(family)
        coloring = color(selection, overlap_sets(selection))
        L_used = max(L_used, coloring.n_colors)

        # Mass of uncovered atoms captured by each color class.
        best_mass, best_fam = -1.0, None
        for fam in coloring.families:
            caught = _covered_mask(space, mu.points[uncovered],
                                   selection.centers[fam],
                                   selection.radii[fam])
            mass = float(mu.weights[uncovered][caught].sum())
            if mass > best_mass:
                best_mass, best_fam = mass, fam
        fam = best_fam
        per_ball = []
        for j in fam:
            caught = _covered_mask(space, mu.points[uncovered],
                                   selection.centers[[j]],
                                   selection.radii[[j]])
            per_ball.append(float(mu.weights[uncovered][caught].sum()))
        order = np.argsort(-np.asarray(per_ball), kind="stable")
        kept, acc = [], 0.0
        for idx in order:
            if acc >= best_mass / 2.0 and kept:
                break
            kept.append(fam[idx])
            acc += per_ball[idx]

        new_c = selection.centers[kept]
        new_r = selection.radii[kept]
        chosen.extend(GeodesicBall(c, float(r))
                      for c, r in zip(new_c, new_r))
        chosen_c = np.vstack([chosen_c, new_c])
        chosen_r = np.concatenate([chosen_r, new_r])
        newly = _covered_mask(space, mu.points, new_c, new_r)
        uncovered &= ~newly
        residuals.append(float(mu.weights[uncovered].sum()))
        rounds += 1
        if round_stuck:
            stuck = max(stuck, round_stuck)
            status = "partial"

    if uncovered.any() and status == "complete":
        status = "partial"
    return FillResult(chosen, residuals, initial_mass, L_used, status,
                      stuck, rounds)


def _covered_mask(space, points, centers, radii):
    if len(points) == 0 or len(radii) == 0:
        return np.zeros(len(points), dtype=bool)
    counts = kernels.contain_counts(space.kind_code,
                                    np.ascontiguousarray(points),
                                    np.ascontiguousarray(centers),
                                    np.ascontiguousarray(radii),
                                    space.periods_array)
    return counts > 0


def audit_fill(space, result, region_predicate=None):
    """Exact disjointness scan plus the per-round decay-envelope check."""
    centers = np.array([b.center for b in result.disjoint_balls]) \
        if result.disjoint_balls else np.empty((0, space.ambient_dim))
    radii = np.array([b.radius for b in result.disjoint_balls])
    disjoint = not verify_disjoint(space, centers, radii)
    env = result.envelope()
    envelope_ok = all(res <= bound + 1e-12
                      for res, bound in zip(result.residual_per_round, env))
    monotone = all(b <= a + 1e-12 for a, b in
                   zip(result.residual_per_round,
                       result.residual_per_round[1:]))
    return {
        "report": "vitali_fill_audit",
        "passed": bool(disjoint and envelope_ok and monotone),
        "disjoint": bool(disjoint),
        "envelope_respected": bool(envelope_ok),
        "residual_monotone": bool(monotone),
    }


# --- density bounds and the Radon-Nikodym identity --------------------------

@dataclass
class BoundAuditRecord:
    side: str
    threshold: float
    passed: bool
    subset_size: int
    nu1_subset: float
    nu2_subset: float
    inconclusive: list
    tolerance: float

    def to_json(self):
        return {
            "report": "density_bound_audit",
            "side": self.side,
            "threshold": self.threshold,
            "passed": self.passed,
            "subset_size": self.subset_size,
            "nu1_subset": self.nu1_subset,
            "nu2_subset": self.nu2_subset,
            "inconclusive": self.inconclusive,
            "tolerance": self.tolerance,
        }


def density_bound_audit(nu1, nu2, space, points, c, side, ladder,
                        config=None):
    """Check mass comparison over sublevel/superlevel sets of the estimate.

    Points whose lower estimate stays <= c must satisfy
    nu2(subset) <= c * nu1(subset) (and dually for the upper side).  Exact
    for atomic measures once the ladder floor clears the atom separation;
    points where it does not are reported inconclusive.
    """
    if not (isinstance(nu1, AtomicMeasure) and isinstance(nu2, AtomicMeasure)):
        raise InvalidInputError("density_bound_audit needs atomic measures")
    if side not in ("lower", "upper"):
        raise InvalidInputError("side must be 'lower' or 'upper'")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    floor = ladder.floor()
    estimates = differentiate_grid(nu1, nu2, space, points, ladder, config)
    d_atoms = geometry.pairwise_distances(space, points, nu1.points)

    subset, inconclusive = [], []
    for i, est in enumerate(estimates):
        others = d_atoms[i][d_atoms[i] > 0.0]
        separation = float(others.min()) if others.size else math.inf
        if floor >= separation or est.status != STATUS_CONVERGED:
            inconclusive.append(i)
            continue
        if (side == "lower" and est.extrapolated <= c) or \
                (side == "upper" and est.extrapolated >= c):
            subset.append(i)

    def subset_mass(measure):
        if not subset:
            return 0.0
        sel = points[subset]
        d = geometry.pairwise_distances(space, sel, measure.points)
        total = 0.0
        for row in d:
            hits = np.nonzero(row < 1e-12)[0]
            total += float(measure.weights[hits].sum())
        return total

    m1, m2 = subset_mass(nu1), subset_mass(nu2)
    tolerance = 1e-12 * max(1.0, abs(m1), abs(m2))
    if side == "lower":
        passed = m2 <= c * m1 + tolerance
    else:
        passed = m2 >= c * m1 - tolerance
    return BoundAuditRecord(side, float(c), bool(passed), len(subset),
                            m1, m2, inconclusive, tolerance)


@dataclass
class RnCheckReport:
    relative_error: float
    integral: float
    nu2_mass: MassValue
    non_converged: int
    grid_size: int
    failure: str = None

    @property
    def passed(self):
        return self.failure is None

    def to_json(self):
        return {
            "report": "rn_identity_check",
            "relative_error": self.relative_error,
            "integral": self.integral,
            "nu2_mass": self.nu2_mass.to_json(),
            "non_converged": self.non_converged,
            "grid_size": self.grid_size,
            "failure": self.failure,
        }


def rn_identity_check(nu1, nu2, space, region, grid, ladder, config=None,
                      workers=1, eps=1e-12):
    """Compare integral of the estimated derivative against nu2(region).

    Atomic base measure: the derivative is evaluated at every support atom
    inside the region and summed exactly against the weights.  Density base
    measure: the derivative is evaluated on the caller's grid (expected to
    equidistribute the region) and integrated by the sample mean times the
    region volume; the region volume comes from the region when known and a
    Monte Carlo estimate otherwise.
    """
    config = config or ClassifierConfig()
    nu2_mass = region_mass(nu2, space, region, workers)
    if isinstance(nu1, AtomicMeasure):
        mask = region.indicator(nu1.points)
        pts = nu1.points[mask]
        wts = nu1.weights[mask]
        estimates = differentiate_grid(nu1, nu2, space, pts, ladder, config,
                                       workers) if len(pts) else []
        # np.sum keeps the summation order identical to region_mass, so the
        # identity is bitwise exact on scaled-weight fixtures.
        integral = float(np.sum(
            np.array([est.extrapolated for est in estimates]) * wts)) \
            if len(pts) else 0.0
        grid_size = len(pts)
    else:
        grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
        inside = region.indicator(grid)
        pts = grid[inside]
        if pts.shape[0] == 0:
            raise InvalidInputError("no grid points inside the region")
        estimates = differentiate_grid(nu1, nu2, space, pts, ladder, config,
                                       workers)
        if region.volume is not None:
            vol = region.volume
        else:
            vol = region_mass(_unit_volume(nu1, space), space, region,
                              workers).value
        dens = nu1.density_at(pts)
        vals = np.array([est.extrapolated for est in estimates])
        integral = float(vol * np.mean(vals * dens))
        grid_size = pts.shape[0]
    non_converged = sum(1 for est in estimates
                        if est.status != STATUS_CONVERGED)
    rel = abs(integral - nu2_mass.value) / max(nu2_mass.value, eps)
    failure = None
    if nu2_mass.value <= 0.0 and abs(integral) > eps:
        failure = "region has zero nu2-mass but nonzero integral"
    return RnCheckReport(float(rel), float(integral), nu2_mass,
                         non_converged, grid_size, failure)


def _unit_volume(nu1, space):
    from .measures import volume_measure
    return volume_measure(space, nu1.integration)
