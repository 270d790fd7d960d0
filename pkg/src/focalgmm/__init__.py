"""Double-regularised GMM for linear network models with a misspecified adjacency matrix."""

from ._validation import NumericalError, ValidationError
from .bench import ResultTable, run_replications, run_table
from .clime import ClimeConfig, clime_inverse, solve_clime
from .debias import CorrectionConfig, EstimateBundle, build_correction, debias
from .dgp import DgpConfig, SimulatedData, simulate, two_stage_least_squares
from .diagnostics import kappa_lower_bound, rip_check, sparse_singular_values
from .estimator import DRGMM, FitResult, fit_pipeline
from .inference import InferenceConfig, InferenceReport, infer
from .lp import LpProblem, LpSolution, solve_lp
from .model import (NetworkSpec, PanelData, TransformSpec, assemble_linear_moments,
                    build_lagged_transform, build_spatial_transform, build_spillover_transform,
                    single_equation_transform)
from .rmd import RmdConfig, select_lambda, solve_rmd
from .splitting import split_estimate

__version__ = "0.1.0"

__all__ = [
    "NumericalError", "ValidationError",
    "ResultTable", "run_replications", "run_table",
    "ClimeConfig", "clime_inverse", "solve_clime",
    "CorrectionConfig", "EstimateBundle", "build_correction", "debias",
    "DgpConfig", "SimulatedData", "simulate", "two_stage_least_squares",
    "kappa_lower_bound", "rip_check", "sparse_singular_values",
    "DRGMM", "FitResult", "fit_pipeline",
    "InferenceConfig", "InferenceReport", "infer",
    "LpProblem", "LpSolution", "solve_lp",
    "NetworkSpec", "PanelData", "TransformSpec", "assemble_linear_moments",
    "build_lagged_transform", "build_spatial_transform", "build_spillover_transform",
    "single_equation_transform",
    "RmdConfig", "select_lambda", "solve_rmd",
    "split_estimate",
]
