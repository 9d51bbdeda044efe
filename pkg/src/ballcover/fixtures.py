"""Randomized fixtures: ball families and measure pairs on each space.

Used by the demo pipeline and by the randomized test suites; everything is
driven by a caller-supplied seeded generator so runs are reproducible.
"""

import math

import numpy as np

from . import geometry
from .covering import BallFamily
from .measures import AtomicMeasure


def default_radius_range(space):
    """Radius bounds that keep balls 4-proper with comparison headroom.

    Curved compact directions stay below inj/8 so the volume-comparison
    constants remain modest.
    """
    inj = geometry.injectivity_radius(space)
    if math.isinf(inj):
        return 0.02, 0.3
    return 0.02 * inj / 8.0, 0.999 * inj / 8.0


def random_family(space, n_balls, rng, radius_range=None, extent=1.0):
    lo, hi = radius_range or default_radius_range(space)
    centers = geometry.random_points(space, n_balls, rng, extent)
    radii = rng.uniform(lo, hi, n_balls)
    return BallFamily(space, centers, radii)


def random_atomic_pair(space, n_atoms, rng, ratio=1.5, extent=1.0):
    """Base measure with unit weights and its scaled partner w2 = ratio*w1."""
    points = geometry.random_points(space, n_atoms, rng, extent)
    nu1 = AtomicMeasure(space, points, np.ones(n_atoms))
    return nu1, nu1.scaled(ratio)


def space_from_flags(kind, dim, periods=None):
    from .geometry import ModelSpace

    if kind == "torus":
        return ModelSpace.torus(periods if periods is not None
                                else [1.0] * dim)
    return ModelSpace(kind, dim)
