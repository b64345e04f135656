"""Finite-mixture Gamma regression with convex clustering of covariate effects."""

from .clusters import ClusterGraph, ccp, constant_similarity_matrix, cosine_similarity_matrix, extract_clusters
from .evaluation import MetricReport, crps, lift, point_prediction, pseudo_r2, quantile_residuals, report
from .initialization import InitConfig, initialize
from .model import Dataset, DomainError, GammaParams, ParameterSet, log_likelihood, penalized_objective
from .simulate import SimConfig, generate
from .solver import AdmmState, FitConfig, FitError, FitResult, fit

__all__ = [
    "AdmmState", "ClusterGraph", "Dataset", "DomainError", "FitConfig", "FitError", "FitResult",
    "GammaParams", "InitConfig", "MetricReport", "ParameterSet", "SimConfig",
    "ccp", "constant_similarity_matrix", "cosine_similarity_matrix", "crps", "extract_clusters",
    "fit", "generate", "initialize", "lift", "log_likelihood", "penalized_objective",
    "point_prediction", "pseudo_r2", "quantile_residuals", "report",
]
