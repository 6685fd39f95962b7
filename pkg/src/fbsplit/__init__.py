"""Forward-Backward splitting for partly smooth regularizers.

Finite identification of the active manifold and local linear rates,
with certificates and closed-form rate predictions.
"""
from .analysis import (CertificateReport, RatePrediction, certify, detect_identification,
                       fit_observed_rate, predict_rate_degenerate, predict_rate_q_general,
                       predict_rate_quadratic, predict_rate_r_subspace)
from .core import SubspaceBasis, largest_singular_value_sq, project, thin_svd
from .estimator import ForwardBackwardRegressor
from .regularizers import (GroupL1L2, L1Norm, LInfNorm, NuclearNorm, SmoothnessClass,
                           TotalVariation1D, project_l1_ball, same_manifold)
from .smooth import LeastSquares, blur_least_squares, gaussian_blur_operator
from .solver import SolverConfig, StepSchedule, fb_solve, reference_solution

__version__ = "0.1.0"

__all__ = [
    "CertificateReport", "ForwardBackwardRegressor", "GroupL1L2", "L1Norm", "LInfNorm",
    "LeastSquares", "NuclearNorm", "RatePrediction", "SmoothnessClass", "SolverConfig",
    "StepSchedule", "SubspaceBasis", "TotalVariation1D", "blur_least_squares", "certify",
    "detect_identification", "fb_solve", "fit_observed_rate", "gaussian_blur_operator",
    "largest_singular_value_sq", "predict_rate_degenerate", "predict_rate_q_general",
    "predict_rate_quadratic", "predict_rate_r_subspace", "project", "project_l1_ball",
    "reference_solution", "same_manifold", "thin_svd",
]
