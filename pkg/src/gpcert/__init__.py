"""Certified L0 robustness for Gaussian process classifiers.

The package fits a binary GP classifier (dense or sparse), extracts the
latent mean in representer form, and certifies a lower bound on how many
inputs an attacker must modify to move any point of the unit domain from
confident classification of one class to confident classification of the
other.  Search attacks and brute-force oracles provide the matching upper
bounds, a logistic-regression baseline provides its exact counterpart.
"""

from .kernels import KernelSpec, NotPositiveDefiniteError, cross_covariance, eq_kernel, eq_kernel_grad, solve_psd
from .gpc import (
    LabeledDataset,
    LaplaceFit,
    LatentModel,
    SparseFitResult,
    ThresholdPair,
    accuracy,
    compute_thresholds,
    dtc_log_marginal,
    fit_laplace,
    fit_sparse_dtc,
    latent_gradient,
    load_model,
    predict_class,
    predict_latent,
    regression_weights,
    save_model,
)
from .mixture import EQMixture, GridBoundConfig, find_pair_peak, grid_upper_bound, pair_negatives, pca_axes, reduce_pca, upper_bound_mixture
from .bound import (
    CertificateResult,
    EnhanceConfig,
    Slicing,
    bound_dimension,
    bound_joint_pair,
    build_segment_table,
    certify,
    enhance,
    path_weights,
    segment_bound_1d,
)
from .attacks import AttackResult, axis_grid_oracle, axis_search_attack, random_perturbation_search
from .logreg import LinearModel, fit_lr, lr_accuracy, lr_certified_min_inputs, lr_thresholds
from . import data

__version__ = "0.1.0"

__all__ = [
    "KernelSpec", "NotPositiveDefiniteError", "eq_kernel", "eq_kernel_grad", "cross_covariance", "solve_psd",
    "LabeledDataset", "LaplaceFit", "LatentModel", "SparseFitResult", "ThresholdPair",
    "fit_laplace", "regression_weights", "fit_sparse_dtc", "dtc_log_marginal",
    "predict_latent", "predict_class", "latent_gradient", "compute_thresholds", "accuracy",
    "save_model", "load_model",
    "EQMixture", "GridBoundConfig", "find_pair_peak", "pair_negatives", "pca_axes", "reduce_pca",
    "grid_upper_bound", "upper_bound_mixture",
    "Slicing", "EnhanceConfig", "CertificateResult", "segment_bound_1d", "build_segment_table",
    "path_weights", "bound_dimension", "enhance", "bound_joint_pair", "certify",
    "AttackResult", "axis_search_attack", "random_perturbation_search", "axis_grid_oracle",
    "LinearModel", "fit_lr", "lr_thresholds", "lr_certified_min_inputs", "lr_accuracy",
    "data",
]
