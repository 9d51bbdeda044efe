"""Command-line front end.

Subcommands: cover, audit, color, differentiate, vitali, rncheck, demo.
Structured results go to JSON, plot-ready tables to CSV; reports embed the
tolerances they were produced with.  Exit status is 0 only when every audit
the command ran came back clean; input problems exit 2 with an error JSON
on stderr.  Existing output files are never overwritten without --force.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, covering, differentiation, fixtures, geometry, \
    measures
from .covering import BallFamily, Selection
from .differentiation import ClassifierConfig, RadiusLadder
from .errors import BallcoverError

EXIT_OK = 0
EXIT_AUDIT_FAILED = 1
EXIT_BAD_INPUT = 2


class OutputDir:
    def __init__(self, path, force):
        self.path = path
        self.force = force
        os.makedirs(path, exist_ok=True)

    def file(self, name):
        full = os.path.join(self.path, name)
        if os.path.exists(full) and not self.force:
            raise BallcoverError(
                f"refusing to overwrite {full} (use --force)")
        return full

    def write_json(self, name, obj):
        with open(self.file(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _tolerances(args):
    return {
        "exact_slack": geometry.EXACT_SLACK,
        "transcendental_slack": geometry.TRANSCENDENTAL_SLACK,
        "rel_tol": args.rel_tol,
        "ladder": {"r0": args.ladder_r0, "factor": args.ladder_factor,
                   "depth": args.ladder_depth},
        "seed": args.seed,
        "workers": args.workers,
    }


def _space_from_args(args):
    if args.space is None:
        return None
    if args.space == "torus":
        if not args.periods:
            raise BallcoverError("--periods is required for torus spaces")
        return geometry.ModelSpace.torus(args.periods)
    return geometry.ModelSpace(args.space, args.dim)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BallcoverError(f"cannot read {path}: {exc}")


def _ladder_from(args, obj=None, space=None):
    if args.ladder_r0 is not None:
        return RadiusLadder(args.ladder_r0, args.ladder_factor,
                            args.ladder_depth)
    if obj and "ladder" in obj:
        return RadiusLadder.from_json(obj["ladder"])
    if space is not None:
        return differentiation.default_ladder(space)
    raise BallcoverError("no ladder given (use --ladder-r0 or job file)")


def _classifier(args):
    return ClassifierConfig(rel_tol=args.rel_tol)


def _run_cover(args, out):
    family = BallFamily.from_json(_load_json(args.input))
    selection = covering.greedy_select(family)
    audit = covering.audit_selection(selection)
    out.write_json("selection.json", selection.to_json())
    report = audit.to_json()
    report["tolerances"].update(_tolerances(args))
    out.write_json("selection_audit.json", report)
    return EXIT_OK if audit.passed else EXIT_AUDIT_FAILED


def _selection_from_input(obj):
    if "chosen" in obj:
        return Selection.from_json(obj)
    return covering.greedy_select(BallFamily.from_json(obj))


def _run_audit(args, out):
    selection = _selection_from_input(_load_json(args.input))
    report = covering.overlap_sets(selection)
    audits = [covering.audit_selection(selection),
              covering.audit_bounds(selection, report),
              covering.audit_claims(selection, report)]
    for audit in audits:
        payload = audit.to_json()
        payload["tolerances"].update(_tolerances(args))
        out.write_json(f"{audit.name}.json", payload)
    report.write_csv(out.file("overlap.csv"))
    out.write_json("overlap.json", report.to_json())
    return EXIT_OK if all(a.passed for a in audits) else EXIT_AUDIT_FAILED


def _run_color(args, out):
    selection = _selection_from_input(_load_json(args.input))
    report = covering.overlap_sets(selection)
    coloring = covering.color(selection, report)
    audit = covering.verify_coloring(coloring)
    payload = coloring.to_json()
    payload["max_overlap"] = report.max_i
    out.write_json("coloring.json", payload)
    verdict = audit.to_json()
    verdict["tolerances"].update(_tolerances(args))
    out.write_json("coloring_audit.json", verdict)
    return EXIT_OK if audit.passed else EXIT_AUDIT_FAILED


def _measures_from_job(job, space):
    nu1 = measures.measure_from_json(space, job["nu1"])
    nu2 = measures.measure_from_json(space, job["nu2"])
    return nu1, nu2


def _grid_from_job(job, space):
    grid = job.get("grid")
    if isinstance(grid, dict) and grid.get("kind") == "lattice":
        lo = np.asarray(grid["lo"], dtype=float)
        hi = np.asarray(grid["hi"], dtype=float)
        shape = [int(s) for s in grid["shape"]]
        axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(s) + 0.5) / s
                for i, s in enumerate(shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if grid is None:
        return None
    return np.asarray(grid, dtype=float)


def _run_differentiate(args, out):
    job = _load_json(args.input)
    space = _space_from_args(args) or geometry.ModelSpace.from_json(
        job["space"])
    nu1, nu2 = _measures_from_job(job, space)
    points = _grid_from_job(job, space)
    if points is None:
        points = np.asarray(job["points"], dtype=float)
    ladder = _ladder_from(args, job, space)
    estimates = differentiation.differentiate_grid(
        nu1, nu2, space, points, ladder, _classifier(args),
        workers=args.workers)
    differentiation.estimates_to_csv(estimates, out.file("estimates.csv"))
    summary = {
        "report": "differentiate",
        "tolerances": _tolerances(args),
        "ladder": ladder.to_json(),
        "count": len(estimates),
        "status_counts": {s: sum(1 for e in estimates if e.status == s)
                          for s in sorted({e.status for e in estimates})},
        "estimates": [e.to_json() for e in estimates],
    }
    out.write_json("estimates.json", summary)
    return EXIT_OK


def _run_vitali(args, out):
    job = _load_json(args.input)
    space = _space_from_args(args) or geometry.ModelSpace.from_json(
        job["space"])
    mu = measures.measure_from_json(space, job["measure"])
    centers = np.asarray(job["centers"], dtype=float) \
        if "centers" in job else mu.points
    ladder = _ladder_from(args, job, space)
    predicate = None
    if "region" in job:
        predicate = measures.region_from_json(space, job["region"]).indicator
    result = differentiation.vitali_fill(
        space, centers, ladder, mu, predicate,
        max_rounds=int(job.get("max_rounds", 50)))
    audit = differentiation.audit_fill(space, result)
    payload = result.to_json()
    payload["tolerances"] = _tolerances(args)
    payload["audit"] = audit
    out.write_json("vitali.json", payload)
    return EXIT_OK if audit["passed"] else EXIT_AUDIT_FAILED


def _run_rncheck(args, out):
    job = _load_json(args.input)
    space = _space_from_args(args) or geometry.ModelSpace.from_json(
        job["space"])
    nu1, nu2 = _measures_from_job(job, space)
    region = measures.region_from_json(space, job["region"])
    grid = _grid_from_job(job, space)
    ladder = _ladder_from(args, job, space)
    report = differentiation.rn_identity_check(
        nu1, nu2, space, region, grid, ladder, _classifier(args),
        workers=args.workers)
    payload = report.to_json()
    payload["tolerances"] = _tolerances(args)
    out.write_json("rncheck.json", payload)
    threshold = job.get("max_relative_error")
    ok = report.passed and (threshold is None
                            or report.relative_error <= float(threshold))
    return EXIT_OK if ok else EXIT_AUDIT_FAILED


def _run_demo(args, out):
    space = _space_from_args(args) or geometry.ModelSpace.euclidean(2)
    rng = np.random.default_rng(args.seed)
    family = fixtures.random_family(space, 120, rng)
    selection = covering.greedy_select(family)
    report = covering.overlap_sets(selection)
    audits = [covering.audit_selection(selection),
              covering.audit_bounds(selection, report),
              covering.audit_claims(selection, report)]
    coloring = covering.color(selection, report)
    audits.append(covering.verify_coloring(coloring))

    out.write_json("family.json", family.to_json())
    out.write_json("selection.json", selection.to_json())
    report.write_csv(out.file("overlap.csv"))
    for audit in audits:
        payload = audit.to_json()
        payload["tolerances"].update(_tolerances(args))
        out.write_json(f"{audit.name}.json", payload)
    out.write_json("coloring.json", coloring.to_json())

    probes = geometry.random_points(space, 2000, rng)
    max_mult = covering.multiplicity(selection, probes)

    nu1, nu2 = fixtures.random_atomic_pair(space, 40, rng, ratio=1.5)
    inj = geometry.injectivity_radius(space)
    ladder = RadiusLadder(min(0.1, inj / 8.0), 0.5, 6)
    estimates = differentiation.differentiate_grid(
        nu1, nu2, space, nu1.points[:10], ladder, _classifier(args),
        workers=args.workers)
    differentiation.estimates_to_csv(estimates, out.file("estimates.csv"))

    fill = differentiation.vitali_fill(space, nu1.points, ladder, nu1,
                                       max_rounds=100)
    fill_audit = differentiation.audit_fill(space, fill)
    payload = fill.to_json()
    payload["audit"] = fill_audit
    out.write_json("vitali.json", payload)

    region = measures.ball_region(
        space, geometry.space_origin(space),
        min(1.0, 0.9 * inj if np.isfinite(inj) else 1.0))
    rn = differentiation.rn_identity_check(nu1, nu2, space, region, None,
                                           ladder, _classifier(args))
    summary = {
        "report": "demo",
        "backend": _backend_name(),
        "space": space.to_json(),
        "tolerances": _tolerances(args),
        "selection_size": len(selection),
        "colors_used": coloring.n_colors,
        "max_overlap": report.max_i,
        "max_multiplicity": max_mult,
        "audits_passed": all(a.passed for a in audits),
        "vitali": {"rounds": fill.rounds, "status": fill.status,
                   "audit_passed": fill_audit["passed"]},
        "rn_relative_error": rn.relative_error,
        "estimate_statuses": sorted({e.status for e in estimates}),
    }
    out.write_json("demo_summary.json", summary)
    ok = all(a.passed for a in audits) and fill_audit["passed"] \
        and rn.passed
    return EXIT_OK if ok else EXIT_AUDIT_FAILED


def _backend_name():
    from . import kernels
    return kernels.BACKEND


_COMMANDS = {
    "cover": _run_cover,
    "audit": _run_audit,
    "color": _run_color,
    "differentiate": _run_differentiate,
    "vitali": _run_vitali,
    "rncheck": _run_rncheck,
    "demo": _run_demo,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ballcover",
        description="Geodesic ball covering and measure differentiation "
                    "on constant-curvature model spaces.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("cover", "greedy selection plus structural audit"),
        ("audit", "full inequality audit of a family or selection"),
        ("color", "disjoint-subfamily coloring with verification"),
        ("differentiate", "ball-ratio derivative estimates on a grid"),
        ("vitali", "disjoint-ball extraction with decay certificate"),
        ("rncheck", "integrate the estimated density against the base"),
        ("demo", "randomized end-to-end pipeline on one space"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", help="input JSON (family/selection/job)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--space",
                       choices=["euclidean", "sphere", "hyperbolic", "torus"])
        p.add_argument("--dim", type=int, default=2)
        p.add_argument("--periods", type=float, nargs="+")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--ladder-r0", type=float, default=None)
        p.add_argument("--ladder-factor", type=float, default=0.5)
        p.add_argument("--ladder-depth", type=int, default=6)
        p.add_argument("--rel-tol", type=float,
                       default=differentiation.RATIO_REL_TOL)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--force", action="store_true",
                       help="allow overwriting existing outputs")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    needs_input = args.command not in ("demo",)
    try:
        if needs_input and not args.input:
            raise BallcoverError(f"{args.command} requires --input")
        out = OutputDir(args.out, args.force)
        return _COMMANDS[args.command](args, out)
    except BallcoverError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
