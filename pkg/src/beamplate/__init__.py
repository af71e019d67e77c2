"""Beam-plate junction laboratory.

A vertical elastic beam (small square cross section) stands on a thin
horizontal plate; both thickness parameters shrink together.  This package
solves the rescaled three-dimensional elasticity problem on the fixed
reference multidomain, solves the three one-/two-dimensional limit models
(coupled, beam-only, plate-only), and measures the convergence of energies,
junction residuals and corrector profiles along a shrinking-parameter
schedule.
"""

__version__ = "0.1.0"

from .tensors import Tensor4, isotropic, inner, apply
from .scaling import ScalingParams, schedule

__all__ = [
    "Tensor4",
    "isotropic",
    "inner",
    "apply",
    "ScalingParams",
    "schedule",
]
