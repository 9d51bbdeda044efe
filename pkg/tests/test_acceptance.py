"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria 1-5 share a 100-seed-per-space randomized covering suite; the
differentiation criteria use the quadrature and atomic fixtures they
specify.  Run with ``pytest -s tests/test_acceptance.py`` to see the
per-criterion lines.
"""

import math
import os
import time

import numpy as np
import pytest

from ballcover import fixtures, geometry
from ballcover.covering import THETA_FLOOR, audit_bounds, audit_claims, \
    audit_selection, color, greedy_select, overlap_sets, verify_coloring, \
    verify_disjoint, volume_comparison_ratio
from ballcover.differentiation import RadiusLadder, STATUS_CONVERGED, \
    audit_fill, differentiate_grid, rn_identity_check, vitali_fill
from ballcover.geometry import ModelSpace
from ballcover.measures import AtomicMeasure, IntegrationConfig, ball_mass, \
    box_region, density_from_spec, semicontinuity_probe, volume_measure
from ballcover.covering import GeodesicBall

SUITE_SPACES = [
    ModelSpace.euclidean(1),
    ModelSpace.euclidean(2),
    ModelSpace.sphere(2),
    ModelSpace.hyperbolic(2),
    ModelSpace.torus([1.0, 1.3]),
]
SEEDS_PER_SPACE = 100


def report(num, name, passed, detail=""):
    tag = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {num:02d} {name}: {tag}{suffix}")
    assert passed, f"criterion {num} failed: {name} {detail}"


@pytest.fixture(scope="module")
def covering_suite():
    """Greedy + full audits over 100 seeded families per space."""
    t0 = time.perf_counter()
    runs = []
    for space in SUITE_SPACES:
        for seed in range(SEEDS_PER_SPACE):
            rng = np.random.default_rng([seed, space.kind_code, space.dim])
            n_balls = int(rng.integers(50, 501))
            family = fixtures.random_family(space, n_balls, rng)
            selection = greedy_select(family)
            rep = overlap_sets(selection)
            runs.append({
                "space": space,
                "family": family,
                "selection": selection,
                "overlap": rep,
                "selection_audit": audit_selection(selection),
                "bounds": audit_bounds(selection, rep),
                "claims": audit_claims(selection, rep),
            })
    elapsed = time.perf_counter() - t0
    return {"runs": runs, "elapsed": elapsed}


def test_criterion_1_selection_suite(covering_suite):
    runs = covering_suite["runs"]
    failures = [r for r in runs if not r["selection_audit"].passed]
    elapsed = covering_suite["elapsed"]
    report(1, "selection clauses over 100 seeds x 5 spaces",
           not failures and elapsed <= 60.0,
           f"{len(runs)} families, {elapsed:.1f}s")


def test_criterion_2_m_count_bound(covering_suite):
    bad = []
    for r in covering_suite["runs"]:
        space = r["space"]
        n = space.dim
        max_m = r["overlap"].max_m
        if space.kind in ("euclidean", "torus"):
            bound = 20.0 ** n
        else:
            radii = r["selection"].radii
            assert float(radii.max()) \
                <= geometry.injectivity_radius(space) / 8 + 1e-12
            bound = volume_comparison_ratio(
                space, float(radii.min()) / 3.0,
                5.0 * float(radii.max())) * 20.0 ** n
        if max_m > bound:
            bad.append((space.kind, max_m, bound))
    report(2, "overlap count bound #M_k <= (c2/c1) 20^n", not bad, str(bad))


def test_criterion_3_theta_floor(covering_suite):
    worst = math.inf
    bad = 0
    for r in covering_suite["runs"]:
        clause = r["bounds"].clauses["iii_theta_def_floor"]
        if not clause.passed:
            bad += len(clause.violations)
        if "min_theta_def" in r["bounds"].extras:
            worst = min(worst, r["bounds"].extras["min_theta_def"])
    detail = f"min theta_def {worst:.6f} vs floor {THETA_FLOOR:.6f}"
    report(3, "deformed-angle floor arccos(61/64)", bad == 0, detail)


def test_criterion_4_claims(covering_suite):
    bad = [r for r in covering_suite["runs"] if not r["claims"].passed]
    checked = sum(r["claims"].clauses["cos_implies_membership"].checked
                  for r in covering_suite["runs"])
    report(4, "membership implication and excess bound", not bad,
           f"{checked} pairs checked")


def test_criterion_5_coloring(covering_suite):
    bad = []
    for r in covering_suite["runs"]:
        coloring = color(r["selection"], r["overlap"])
        if coloring.n_colors > r["overlap"].max_i + 1:
            bad.append("color count")
        audit = verify_coloring(coloring)
        if not audit.passed:
            bad.append("audit")
    report(5, "coloring disjointness, bound, coverage", not bad, str(bad))


def quadrature_fixture():
    space = ModelSpace.euclidean(2)
    nu1 = volume_measure(space)
    nu2 = density_from_spec(space, {
        "name": "poly",
        "params": {"terms": [{"coef": 1.0, "powers": [0, 0]},
                             {"coef": 1.0, "powers": [2, 0]}]},
    }, IntegrationConfig(method="polar_quadrature", sample_count=400000,
                         quadrature_order=16, seed=2024))
    return space, nu1, nu2


def test_criterion_6_density_convergence():
    space, nu1, nu2 = quadrature_fixture()
    pts = np.array([[(i + 0.5) / 3, (j + 0.5) / 3]
                    for i in range(3) for j in range(3)])
    t0 = time.perf_counter()
    estimates = differentiate_grid(nu1, nu2, space, pts,
                                   RadiusLadder(0.2, 0.5, 6))
    elapsed = time.perf_counter() - t0
    worst = 0.0
    ok = True
    for p, est in zip(pts, estimates):
        ok &= est.status == STATUS_CONVERGED
        worst = max(worst, abs(est.extrapolated - (1.0 + p[0] ** 2)))
    report(6, "density-ratio convergence on 3x3 grid",
           ok and worst <= 1e-3 and elapsed <= 10.0,
           f"max err {worst:.2e}, {elapsed:.2f}s")


def atomic_pair(h, seed=3):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, (30, 2))
    nu1 = AtomicMeasure(ModelSpace.euclidean(2), pts, np.ones(30))
    return nu1, nu1.scaled(h)


def test_criterion_7_atomic_exactness():
    space = ModelSpace.euclidean(2)
    region = box_region(space, [0.0, 0.0], [1.0, 1.0])
    ok = True
    details = []
    for h in (0.5, 1.5, 7.0):
        nu1, nu2 = atomic_pair(h)
        separation = nu1.separation_radius()
        ladder = RadiusLadder(min(0.2, 0.4 * separation), 0.5, 6)
        assert ladder.floor() < separation
        estimates = differentiate_grid(nu1, nu2, space, nu1.points, ladder)
        ratios = nu2.weights / nu1.weights
        exact = all(est.status == STATUS_CONVERGED
                    and est.extrapolated == ratios[i]
                    for i, est in enumerate(estimates))
        rn = rn_identity_check(nu1, nu2, space, region, None, ladder)
        ok &= exact and rn.relative_error == 0.0
        details.append(f"h={h}: exact={exact}, rn={rn.relative_error}")
    report(7, "atomic weight-ratio exactness", ok, "; ".join(details))


def test_criterion_8_rn_identity_density():
    space, nu1, nu2 = quadrature_fixture()
    region = box_region(space, [0.0, 0.0], [1.0, 1.0])
    grid = np.array([[(i + 0.5) / 32, (j + 0.5) / 32]
                     for i in range(32) for j in range(32)])
    rep = rn_identity_check(nu1, nu2, space, region, grid,
                            RadiusLadder(0.2, 0.5, 5))
    # closed form: integral of 1 + x^2 over the unit square is 4/3
    closed = 4.0 / 3.0
    ok = rep.relative_error <= 0.01 and rep.non_converged == 0 \
        and abs(rep.integral - closed) / closed <= 0.01
    report(8, "Radon-Nikodym identity on the density fixture", ok,
           f"rel err {rep.relative_error:.4f}, integral {rep.integral:.5f}")


def test_criterion_9_vitali_fill():
    space = ModelSpace.euclidean(2)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.0, 1.0, (50, 2))
    mu = AtomicMeasure(space, pts, np.ones(50))
    ladder = RadiusLadder(0.128, 0.5, 8)       # floor 1e-3
    result = vitali_fill(space, mu.points, ladder, mu, max_rounds=200)
    audit = audit_fill(space, result)
    q = 1.0 - 1.0 / (2.0 * result.L_used)
    envelope_ok = all(
        res <= result.initial_mass * q ** (p + 1) + 1e-12
        for p, res in enumerate(result.residual_per_round))
    centers = np.array([b.center for b in result.disjoint_balls])
    radii = np.array([b.radius for b in result.disjoint_balls])
    ok = (audit["passed"] and envelope_ok
          and not verify_disjoint(space, centers, radii)
          and result.rounds <= 200
          and result.residual_per_round[-1] <= 0.01 * result.initial_mass)
    report(9, "Vitali fill decay envelope and termination", ok,
           f"rounds {result.rounds}, L {result.L_used}, "
           f"final residual {result.residual_per_round[-1]}")


def test_criterion_10_semicontinuity():
    space = ModelSpace.euclidean(2)
    violations = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.3, 0.7, 2)
        r = float(rng.uniform(0.1, 0.3))
        # one atom exactly on the boundary sphere of D_r(x), rest random
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        boundary_atom = x + r * u
        pts = np.vstack([boundary_atom, rng.uniform(0.0, 1.0, (25, 2))])
        mu = AtomicMeasure(space, pts, rng.uniform(0.1, 1.0, 26))
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        approach = [x + direction * 2.0 ** -m for m in range(3, 16)]
        rec = semicontinuity_probe(mu, space, r, x, approach)
        if not rec.passed:
            violations += 1
    report(10, "lower-semicontinuity probes", violations == 0,
           f"{violations} violations over 100 configurations")


def test_criterion_11_determinism(tmp_path):
    from ballcover.cli import main
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["demo", "--space", "hyperbolic", "--dim", "2", "--seed", "99"]
    code1 = main([*args, "--out", str(out1)])
    code2 = main([*args, "--out", str(out2)])
    identical = code1 == code2 == 0 and all(
        (out1 / n).read_bytes() == (out2 / n).read_bytes()
        for n in sorted(os.listdir(out1)))

    # worker counts: atomic pipelines agree exactly
    nu1, nu2 = atomic_pair(1.5)
    space = ModelSpace.euclidean(2)
    ladder = RadiusLadder(0.05, 0.5, 6)
    est1 = differentiate_grid(nu1, nu2, space, nu1.points[:8], ladder,
                              workers=1)
    est3 = differentiate_grid(nu1, nu2, space, nu1.points[:8], ladder,
                              workers=3)
    atomic_same = all(a.extrapolated == b.extrapolated
                      and a.ratios == b.ratios
                      for a, b in zip(est1, est3))

    # Monte Carlo pipelines agree within reported error bounds
    dens = density_from_spec(space, {
        "name": "affine", "params": {"a": [0.5, 0.0], "b": 1.0},
    }, IntegrationConfig(method="monte_carlo", sample_count=50000, seed=17))
    ball = GeodesicBall(np.array([0.4, 0.4]), 0.3)
    masses = [ball_mass(dens, space, ball, workers=w) for w in (1, 2, 4)]
    mc_ok = all(abs(m.value - masses[0].value)
                <= m.error_estimate + masses[0].error_estimate
                for m in masses[1:])
    rerun = ball_mass(dens, space, ball, workers=4)
    mc_bitwise = rerun.value == masses[2].value

    report(11, "determinism across reruns and worker counts",
           identical and atomic_same and mc_ok and mc_bitwise)
