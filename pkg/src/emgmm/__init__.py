"""Sample and gradient EM for spherical Gaussian mixtures with known weights."""

from .core import (
    MeansEstimate,
    MixtureModel,
    SampleSet,
    SeparationStats,
    build_model,
    equal_weights,
    estimate_error,
    in_region,
    init_line_pair,
    init_sphere,
    make_centers,
    per_component_errors,
    regular_simplex_centers,
    responsibilities,
    responsibility_gradient,
    sample,
    separation_stats,
)
from .errors import GmmError, GmmInputError, GmmNumericalError
from .oracle import McConfig, McEstimate, population_em_step, population_gradient_em_step
from .solvers import EmTrajectory, SolverConfig, em_step, gradient_em_step, run

__all__ = [
    "EmTrajectory",
    "GmmError",
    "GmmInputError",
    "GmmNumericalError",
    "McConfig",
    "McEstimate",
    "MeansEstimate",
    "MixtureModel",
    "SampleSet",
    "SeparationStats",
    "SolverConfig",
    "build_model",
    "em_step",
    "equal_weights",
    "estimate_error",
    "gradient_em_step",
    "in_region",
    "init_line_pair",
    "init_sphere",
    "make_centers",
    "per_component_errors",
    "population_em_step",
    "population_gradient_em_step",
    "regular_simplex_centers",
    "responsibilities",
    "responsibility_gradient",
    "run",
    "sample",
    "separation_stats",
]
