"""Geodesic ball covering and measure differentiation on model spaces."""

__version__ = "0.1.0"

from .covering import BallFamily, Coloring, GeodesicBall, OverlapReport, \
    Selection, audit_bounds, audit_claims, audit_selection, color, \
    greedy_select, multiplicity, overlap_sets
from .differentiation import ClassifierConfig, DensityEstimate, FillResult, \
    RadiusLadder, density_bound_audit, differentiate, differentiate_grid, \
    ratio_ladder, rn_identity_check, vitali_fill
from .errors import BallcoverError, DomainError, InvalidInputError, \
    InvalidMeasureError, InvalidTripleError, InvariantViolationError
from .geometry import ModelSpace, TangentVector, angle_at, ball_volume, \
    deformed_angle, distance, exp_map, injectivity_radius, log_map, \
    sample_ball
from .measures import AtomicMeasure, DensityMeasure, IntegrationConfig, \
    MassValue, Region, ball_mass, ball_region, box_region, region_mass, \
    semicontinuity_probe, volume_measure

__all__ = [
    "AtomicMeasure", "BallFamily", "BallcoverError", "ClassifierConfig",
    "Coloring", "DensityEstimate", "DensityMeasure", "DomainError",
    "FillResult", "GeodesicBall", "IntegrationConfig", "InvalidInputError",
    "InvalidMeasureError", "InvalidTripleError", "InvariantViolationError",
    "MassValue", "ModelSpace", "OverlapReport", "RadiusLadder", "Region",
    "Selection", "TangentVector", "angle_at", "audit_bounds", "audit_claims",
    "audit_selection", "ball_mass", "ball_region", "ball_volume", "box_region",
    "color", "deformed_angle", "density_bound_audit", "differentiate",
    "differentiate_grid", "distance", "exp_map", "greedy_select",
    "injectivity_radius", "log_map", "multiplicity", "overlap_sets",
    "ratio_ladder", "region_mass", "rn_identity_check", "sample_ball",
    "semicontinuity_probe", "vitali_fill", "volume_measure",
]
