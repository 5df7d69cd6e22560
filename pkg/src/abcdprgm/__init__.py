"""Simulation and estimation for the attractor-based coevolving dot product random graph model."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Graph,
    GroupAssignment,
    LatentState,
    StarLatentState,
    alpha_update,
    build_B,
    build_C,
    build_design_matrix,
    compute_attractors,
    lift_to_star,
)
from .simulator import InitSpec, SimConfig, simulate_trajectory  # noqa: E402
from .embedding import EmbedOptions, ase, gaep, procrustes_align, project_to_Dp, sae  # noqa: E402
from .dirichlet_glm import FitOptions, FitReport, GlmData, fit, theoretical_sd  # noqa: E402
from .pipeline import Estimator, EstimationInputs, McConfig, estimate, monte_carlo  # noqa: E402

__all__ = [
    "Graph", "GroupAssignment", "LatentState", "StarLatentState",
    "alpha_update", "build_B", "build_C", "build_design_matrix", "compute_attractors",
    "lift_to_star", "InitSpec", "SimConfig", "simulate_trajectory",
    "EmbedOptions", "ase", "gaep", "procrustes_align", "project_to_Dp", "sae",
    "FitOptions", "FitReport", "GlmData", "fit", "theoretical_sd",
    "Estimator", "EstimationInputs", "McConfig", "estimate", "monte_carlo",
]
