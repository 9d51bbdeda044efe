"""Greedy Besicovitch ball selection, overlap analysis, inequality audits,
and the first-fit coloring into disjoint subfamilies.

The selection keeps, at every step, a ball of maximal radius among those
whose center is still uncovered; for finite families this maximal choice
automatically clears the strict 3/4-of-supremum threshold the construction
requires.  All audits recompute their inequalities from raw distances and
report witnesses instead of raising.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry, kernels
from .errors import InvalidInputError
from .geometry import EXACT_SLACK, TRANSCENDENTAL_SLACK, ModelSpace

# Floor asserted for deformed angles between same-scale overlap partners.
THETA_FLOOR = math.acos(61.0 / 64.0)

CLAIM1_COS_BOUND = 5.0 / 6.0

_MAX_WITNESSES = 20


@dataclass(frozen=True, eq=False)
class GeodesicBall:
    """Open geodesic ball; radius must keep the ball 4-proper."""

    center: np.ndarray
    radius: float

    def to_json(self):
        return {"center": geometry.point_to_json(self.center),
                "radius": float(self.radius)}


class BallFamily:
    """Finite family of 4-proper balls with a bounded center set."""

    def __init__(self, space, centers, radii):
        self.space = space
        self.centers = np.ascontiguousarray(centers, dtype=np.float64)
        self.radii = np.ascontiguousarray(radii, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[0] == 0:
            raise InvalidInputError("family must contain at least one ball")
        if self.centers.shape[0] != self.radii.shape[0]:
            raise InvalidInputError("centers and radii length mismatch")
        if self.centers.shape[1] != space.ambient_dim:
            raise InvalidInputError(
                f"centers have {self.centers.shape[1]} coordinates, "
                f"space needs {space.ambient_dim}")
        if not np.all(np.isfinite(self.centers)):
            raise InvalidInputError("family centers must be bounded (finite)")
        if np.any(self.radii <= 0.0):
            raise InvalidInputError("ball radii must be positive")
        inj = geometry.injectivity_radius(space)
        if np.any(4.0 * self.radii > inj * (1.0 + EXACT_SLACK)):
            raise InvalidInputError(
                "family contains a ball that is not 4-proper")
        for i in range(self.centers.shape[0]):
            geometry.validate_point(space, self.centers[i], f"center {i}")

    def __len__(self):
        return self.centers.shape[0]

    @property
    def balls(self):
        return [GeodesicBall(self.centers[i], float(self.radii[i]))
                for i in range(len(self))]

    @classmethod
    def from_balls(cls, space, balls):
        centers = np.array([b.center for b in balls], dtype=np.float64)
        radii = np.array([b.radius for b in balls], dtype=np.float64)
        return cls(space, centers, radii)

    def center_diameter(self):
        """Diameter of the center set (finite by construction)."""
        d = geometry.pairwise_distances(self.space, self.centers)
        return float(d.max())

    def to_json(self):
        return {
            "space": self.space.to_json(),
            "balls": [{"center": geometry.point_to_json(c),
                       "radius": float(r)}
                      for c, r in zip(self.centers, self.radii)],
        }

    @classmethod
    def from_json(cls, obj):
        space = ModelSpace.from_json(obj["space"])
        balls = obj["balls"]
        centers = np.array([b["center"] for b in balls], dtype=np.float64)
        radii = np.array([float(b["radius"]) for b in balls])
        return cls(space, centers, radii)


@dataclass
class Selection:
    """Ordered greedy output: chosen ball indices plus per-step suprema."""

    family: BallFamily
    chosen: list
    sup_records: list

    def __len__(self):
        return len(self.chosen)

    @property
    def centers(self):
        return self.family.centers[self.chosen]

    @property
    def radii(self):
        return self.family.radii[self.chosen]

    def balls(self):
        return [GeodesicBall(self.family.centers[i],
                             float(self.family.radii[i]))
                for i in self.chosen]

    def to_json(self):
        out = self.family.to_json()
        out["chosen"] = [int(i) for i in self.chosen]
        out["sup_records"] = [float(s) for s in self.sup_records]
        return out

    @classmethod
    def from_json(cls, obj):
        family = BallFamily.from_json(obj)
        return cls(family, [int(i) for i in obj["chosen"]],
                   [float(s) for s in obj["sup_records"]])


@dataclass
class ClauseResult:
    passed: bool
    checked: int
    violations: list = field(default_factory=list)

    def to_json(self):
        return {"passed": bool(self.passed), "checked": int(self.checked),
                "violations": self.violations}


@dataclass
class AuditRecord:
    name: str
    clauses: dict
    tolerances: dict
    extras: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.clauses.values())

    def to_json(self):
        return {
            "report": self.name,
            "passed": self.passed,
            "tolerances": self.tolerances,
            "clauses": {k: v.to_json() for k, v in self.clauses.items()},
            "extras": self.extras,
        }


@dataclass
class OverlapReport:
    """Earlier-overlap sets I_k and their same-scale subsets M_k."""

    i_sets: list
    m_sets: list

    @property
    def max_i(self):
        return max((len(s) for s in self.i_sets), default=0)

    @property
    def max_m(self):
        return max((len(s) for s in self.m_sets), default=0)

    @property
    def max_i_minus_m(self):
        return max((len(i) - len(m)
                    for i, m in zip(self.i_sets, self.m_sets)), default=0)

    @property
    def empirical_overlap_bound(self):
        """max #M_k + max #(I_k \\ M_k), the run's analogue of L(A)."""
        return self.max_m + self.max_i_minus_m

    def to_json(self):
        return {
            "i_sets": [list(map(int, s)) for s in self.i_sets],
            "m_sets": [list(map(int, s)) for s in self.m_sets],
            "max_i": self.max_i,
            "max_m": self.max_m,
            "max_i_minus_m": self.max_i_minus_m,
            "empirical_overlap_bound": self.empirical_overlap_bound,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "num_I_k", "num_M_k"])
            for k, (i_k, m_k) in enumerate(zip(self.i_sets, self.m_sets)):
                w.writerow([k + 1, len(i_k), len(m_k)])


@dataclass
class Coloring:
    """First-fit assignment of selected balls to disjoint subfamilies."""

    selection: Selection
    sigma: np.ndarray           # 1-based color per selection position
    families: list              # per color: list of selection positions

    @property
    def n_colors(self):
        return len(self.families)

    def to_json(self):
        return {
            "n_colors": self.n_colors,
            "sigma": [int(c) for c in self.sigma],
            "families": [[int(self.selection.chosen[j]) for j in fam]
                         for fam in self.families],
        }


def greedy_select(family):
    """Inductive maximal-radius selection over uncovered centers.

    Every step picks a ball of largest radius among those whose center is
    not yet covered (smallest original index on ties) and records the step
    supremum, so the strict 3/4 rule holds by construction.  Terminates with
    every center of the family covered.
    """
    if not isinstance(family, BallFamily):
        raise InvalidInputError("greedy_select expects a BallFamily")
    inj = geometry.injectivity_radius(family.space)
    if np.any(4.0 * family.radii > inj * (1.0 + EXACT_SLACK)):
        raise InvalidInputError("family contains a ball that is not 4-proper")
    kind = family.space.kind_code
    periods = family.space.periods_array
    n = len(family)
    uncovered = np.ones(n, dtype=bool)
    chosen, sups = [], []
    masked = np.where(uncovered, family.radii, -np.inf)
    while uncovered.any():
        j = int(np.argmax(masked))          # first max = smallest index
        sups.append(float(masked[j]))
        chosen.append(j)
        d = kernels.dists_to_point(kind, family.centers, family.centers[j],
                                   periods)
        newly = uncovered & (d < family.radii[j])
        uncovered &= ~newly
        masked[newly] = -np.inf
    return Selection(family, chosen, sups)


def audit_selection(selection):
    """Check the three structural selection properties.

    (a) later radii never exceed 4/3 of earlier ones, (b') centers of later
    balls are at distance >= the earlier radius (which forces the
    third-radius balls to be disjoint), (c) every family center lies in some
    chosen ball.
    """
    sel_c = selection.centers
    sel_r = selection.radii
    space = selection.family.space
    J = len(selection)
    tol = {"radius_monotone_slack": EXACT_SLACK,
           "separation_slack": EXACT_SLACK}

    a = ClauseResult(True, 0)
    b = ClauseResult(True, 0)
    if J > 1:
        ii, jj = np.triu_indices(J, k=1)
        a.checked = len(ii)
        bad = sel_r[jj] > (4.0 / 3.0) * sel_r[ii] + EXACT_SLACK
        for i, j in zip(ii[bad][:_MAX_WITNESSES], jj[bad][:_MAX_WITNESSES]):
            a.violations.append([int(i), int(j), float(sel_r[i]),
                                 float(sel_r[j])])
        a.passed = not bad.any()

        d = geometry.pairwise_distances(space, sel_c)
        b.checked = len(ii)
        badb = d[ii, jj] < sel_r[ii] - EXACT_SLACK
        for i, j in zip(ii[badb][:_MAX_WITNESSES], jj[badb][:_MAX_WITNESSES]):
            b.violations.append([int(i), int(j), float(d[i, j]),
                                 float(sel_r[i])])
        b.passed = not badb.any()

    counts = kernels.contain_counts(
        space.kind_code, selection.family.centers, sel_c, sel_r,
        space.periods_array)
    c = ClauseResult(bool((counts > 0).all()), len(counts))
    for i in np.nonzero(counts == 0)[0][:_MAX_WITNESSES]:
        c.violations.append([int(i)])

    return AuditRecord("selection_audit", {
        "radius_monotone": a,
        "center_separation": b,
        "coverage": c,
    }, tol)


def overlap_sets(selection):
    """Exact I_k (earlier balls meeting D_k) and M_k (those with r <= 3 r_k).

    Open balls meet iff the centers are strictly closer than the radius sum,
    which is exact for 4-proper balls on the model spaces.
    """
    space = selection.family.space
    sel_c = selection.centers
    sel_r = selection.radii
    J = len(selection)
    d = geometry.pairwise_distances(space, sel_c)
    i_sets, m_sets = [], []
    for k in range(J):
        js = np.nonzero(d[:k, k] < sel_r[:k] + sel_r[k])[0]
        i_sets.append([int(j) for j in js])
        m_sets.append([int(j) for j in js if sel_r[j] <= 3.0 * sel_r[k]])
    return OverlapReport(i_sets, m_sets)


def volume_comparison_ratio(space, r_small, r_big):
    """Ratio of the normalized volume profile vol(D_r)/r^n at two radii.

    Equals 1 on flat spaces.  On the sphere the profile is capped at the
    total volume once r passes the injectivity radius, which keeps the bound
    valid for every 4-proper family.
    """
    if space.kind in ("euclidean", "torus"):
        return 1.0

    def profile(r):
        r_eff = min(r, geometry.injectivity_radius(space))
        return geometry.ball_volume(space, r_eff) / r ** space.dim

    f_small, f_big = profile(r_small), profile(r_big)
    return max(f_small, f_big) / min(f_small, f_big)


def audit_bounds(selection, report):
    """Volume-comparison and angle-separation audits over the overlap sets.

    (i) #M_k stays below the 20^n volume-comparison bound, (ii) third-radius
    balls of M_k members sit inside the 5 r_k ball, (iii) deformed angles of
    distinct large-scale partners stay above arccos(61/64).  Also reports
    the empirical minimum tangent angle and its ratio to the deformed angle,
    since no closed-form curvature constant is asserted for that comparison.
    """
    space = selection.family.space
    sel_c = selection.centers
    sel_r = selection.radii
    n = space.dim
    J = len(selection)

    if J > 0:
        ratio = volume_comparison_ratio(
            space, float(sel_r.min()) / 3.0, 5.0 * float(sel_r.max()))
    else:
        ratio = 1.0
    m_bound = ratio * 20.0 ** n

    tol = {"containment_slack": EXACT_SLACK,
           "theta_floor": THETA_FLOOR,
           "theta_slack": TRANSCENDENTAL_SLACK,
           "volume_comparison_ratio": ratio}

    d = geometry.pairwise_distances(space, sel_c)
    count_cl = ClauseResult(True, 0)
    contain_cl = ClauseResult(True, 0)
    theta_cl = ClauseResult(True, 0)
    min_theta_def = math.inf
    min_theta_tan = math.inf
    min_theta_ratio = math.inf

    for k in range(J):
        m_k = report.m_sets[k]
        count_cl.checked += 1
        if len(m_k) > m_bound + EXACT_SLACK:
            count_cl.passed = False
            if len(count_cl.violations) < _MAX_WITNESSES:
                count_cl.violations.append([int(k), len(m_k), float(m_bound)])
        for j in m_k:
            contain_cl.checked += 1
            lhs = d[j, k] + sel_r[j] / 3.0
            if lhs > 5.0 * sel_r[k] + EXACT_SLACK:
                contain_cl.passed = False
                if len(contain_cl.violations) < _MAX_WITNESSES:
                    contain_cl.violations.append(
                        [int(j), int(k), float(lhs), float(5.0 * sel_r[k])])
        m_set = set(m_k)
        big = [j for j in report.i_sets[k] if j not in m_set]
        for a in range(len(big)):
            for b in range(a + 1, len(big)):
                i, j = big[a], big[b]
                theta_cl.checked += 1
                th = geometry.deformed_angle(d[k, i], d[k, j], d[i, j])
                min_theta_def = min(min_theta_def, th)
                th_tan = geometry.angle_at(space, sel_c[k], sel_c[i],
                                           sel_c[j])
                min_theta_tan = min(min_theta_tan, th_tan)
                if th > 0:
                    min_theta_ratio = min(min_theta_ratio, th_tan / th)
                if th < THETA_FLOOR - TRANSCENDENTAL_SLACK:
                    theta_cl.passed = False
                    if len(theta_cl.violations) < _MAX_WITNESSES:
                        theta_cl.violations.append(
                            [int(i), int(j), int(k), float(th)])

    extras = {"m_count_bound": float(m_bound)}
    if math.isfinite(min_theta_def):
        extras["min_theta_def"] = min_theta_def
        extras["min_theta_tangent"] = min_theta_tan
        extras["min_tangent_over_def"] = min_theta_ratio
    return AuditRecord("bounds_audit", {
        "i_m_count_bound": count_cl,
        "ii_containment_in_5rk": contain_cl,
        "iii_theta_def_floor": theta_cl,
    }, tol, extras)


def audit_claims(selection, report):
    """Triangle-inequality audits for large-scale overlap partners.

    Pairs are ordered by distance to the shared later center a_k.  The first
    clause checks that a pair whose deformed-angle cosine exceeds 5/6 has
    the nearer point inside the farther ball (contrapositively); the second
    checks the two-sided excess bound when that membership holds.
    """
    space = selection.family.space
    sel_c = selection.centers
    sel_r = selection.radii
    d = geometry.pairwise_distances(space, sel_c)
    tol = {"cos_bound": CLAIM1_COS_BOUND, "slack": TRANSCENDENTAL_SLACK}

    membership_clause = ClauseResult(True, 0)
    excess_clause = ClauseResult(True, 0)
    for k in range(len(selection)):
        m_k = set(report.m_sets[k])
        big = [j for j in report.i_sets[k] if j not in m_k]
        for a in range(len(big)):
            for b in range(a + 1, len(big)):
                i, j = big[a], big[b]
                if d[k, j] < d[k, i]:
                    i, j = j, i          # convention |a_i| <= |a_j|
                cos_th = math.cos(
                    geometry.deformed_angle(d[k, i], d[k, j], d[i, j]))
                inside = d[i, j] < sel_r[j]
                membership_clause.checked += 1
                if not inside and cos_th > CLAIM1_COS_BOUND + \
                        TRANSCENDENTAL_SLACK:
                    membership_clause.passed = False
                    if len(membership_clause.violations) < _MAX_WITNESSES:
                        membership_clause.violations.append(
                            [int(i), int(j), int(k), float(cos_th)])
                if inside:
                    excess_clause.checked += 1
                    excess = d[i, j] + d[k, i] - d[k, j]
                    ub = (8.0 / 3.0) * (1.0 - cos_th) * d[k, j]
                    if excess < -TRANSCENDENTAL_SLACK or \
                            excess > ub + TRANSCENDENTAL_SLACK:
                        excess_clause.passed = False
                        if len(excess_clause.violations) < _MAX_WITNESSES:
                            excess_clause.violations.append(
                                [int(i), int(j), int(k), float(excess),
                                 float(ub)])
    return AuditRecord("claims_audit", {
        "cos_implies_membership": membership_clause,
        "excess_bound": excess_clause,
    }, tol)


def color(selection, report):
    """First-fit coloring in selection order; colliding colors are the ones
    already taken by earlier overlapping balls, so each color class is a
    disjoint subfamily and together they keep covering all centers."""
    J = len(selection)
    sigma = np.zeros(J, dtype=np.int64)
    for k in range(J):
        used = {int(sigma[j]) for j in report.i_sets[k]}
        c = 1
        while c in used:
            c += 1
        sigma[k] = c
    n_colors = int(sigma.max()) if J else 0
    families = [[k for k in range(J) if sigma[k] == c]
                for c in range(1, n_colors + 1)]
    return Coloring(selection, sigma, families)


def verify_disjoint(space, centers, radii):
    """Exact pairwise-disjointness scan for open balls; returns violations."""
    centers = np.asarray(centers, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    if len(radii) < 2:
        return []
    d = geometry.pairwise_distances(space, centers)
    ii, jj = np.triu_indices(len(radii), k=1)
    bad = d[ii, jj] < radii[ii] + radii[jj]
    return [[int(i), int(j), float(d[i, j]), float(radii[i] + radii[j])]
            for i, j in zip(ii[bad], jj[bad])]


def verify_coloring(coloring):
    """Audit record: per-family disjointness plus preserved coverage."""
    sel = coloring.selection
    space = sel.family.space
    disj = ClauseResult(True, 0)
    for fam in coloring.families:
        viol = verify_disjoint(space, sel.centers[fam], sel.radii[fam])
        disj.checked += len(fam) * (len(fam) - 1) // 2
        if viol:
            disj.passed = False
            disj.violations.extend(viol[:_MAX_WITNESSES])
    cover = ClauseResult(True, 0)
    counts = kernels.contain_counts(
        space.kind_code, sel.family.centers, sel.centers, sel.radii,
        space.periods_array)
    cover.checked = len(counts)
    if not (counts > 0).all():
        cover.passed = False
        cover.violations = [[int(i)] for i in
                            np.nonzero(counts == 0)[0][:_MAX_WITNESSES]]
    assigned = ClauseResult(bool((coloring.sigma >= 1).all()),
                            len(coloring.sigma))
    return AuditRecord("coloring_audit", {
        "families_disjoint": disj,
        "coverage_preserved": cover,
        "every_ball_colored": assigned,
    }, {})


def multiplicity(selection, probes):
    """Largest number of chosen balls containing any single probe point."""
    space = selection.family.space
    probes = np.ascontiguousarray(probes, dtype=np.float64)
    if probes.size == 0:
        return 0
    counts = kernels.contain_counts(
        space.kind_code, probes, selection.centers, selection.radii,
        space.periods_array)
    return int(counts.max())
