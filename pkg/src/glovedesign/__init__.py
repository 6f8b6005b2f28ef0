"""Optimal sensor placement for sensing gloves.

Given a Gaussian prior over hand poses, choose a linear measurement matrix H
(continuous, single-joint selection, or a hybrid of both) that minimizes the
squared Frobenius norm of the posterior covariance, and evaluate the
resulting minimum-variance reconstructions.
"""

__version__ = "0.1.0"

from .continuous import (ContinuousSolution, design_continuous_flow, optimal_continuous_noiseless,
                         optimal_continuous_noisy, project_to_tangent, v1_gradient)
from .discrete import (SelectionDesign, design_discrete_flow, exhaustive_select, round_to_selection,
                       v2_flow_term, v2_penalty)
from .errors import (BudgetError, DegenerateDesignError, GloveDesignError, ModeError, NumericalError,
                     ShapeError, ValidationError)
from .estimator import (MeasurementDesign, NoiseModel, measure, mve_reconstruct, posterior_covariance,
                        v1_cost)
from .flow import DesignResult, FlowOptions, descend, k_schedule, multi_start
from .harness import (CurveReport, ErrorReport, compare_designs, run_reconstruction_experiment,
                      sample_poses, synergy_prior, v1_curve)
from .hybrid import HybridSolution, block_project, design_hybrid, lift_discrete_block
from .kernels import BACKEND
from .prior import PoseDataset, PriorModel, compute_prior, decompose, load_prior, read_dataset_csv

__all__ = [
    "BACKEND", "BudgetError", "ContinuousSolution", "CurveReport", "DegenerateDesignError",
    "DesignResult", "ErrorReport", "FlowOptions", "GloveDesignError", "HybridSolution",
    "MeasurementDesign", "ModeError", "NoiseModel", "NumericalError", "PoseDataset", "PriorModel",
    "SelectionDesign", "ShapeError", "ValidationError", "block_project", "compare_designs",
    "compute_prior", "decompose", "descend", "design_continuous_flow", "design_discrete_flow",
    "design_hybrid", "exhaustive_select", "k_schedule", "lift_discrete_block", "load_prior",
    "measure", "multi_start", "mve_reconstruct", "optimal_continuous_noiseless",
    "optimal_continuous_noisy", "posterior_covariance", "project_to_tangent", "read_dataset_csv",
    "round_to_selection", "run_reconstruction_experiment", "sample_poses", "synergy_prior",
    "v1_cost", "v1_curve", "v1_gradient", "v2_flow_term", "v2_penalty",
]
