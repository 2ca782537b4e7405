"""Quadratic manifold sparse regression.

Train quadratic manifolds from snapshot data with a sparse greedy method and
reconstruct full state vectors from a few sampled components.
"""

from qmsr.exceptions import QMSRError, RankDeficientError, ValidationError
from qmsr.featuremap import quad_features, quad_features_jacobian, quad_features_matrix
from qmsr.manifold import (
    GaussNewtonConfig,
    QuadraticManifoldModel,
    decode,
    encode_full,
    encode_gauss_newton,
    encode_sparse,
    reconstruct,
    reconstruction_error,
    relative_error,
)
from qmsr.numerics import (
    SvdFactors,
    pivoted_qr_column_order,
    pseudo_inverse_apply,
    reduced_svd,
    ridge_lsq_left,
)
from qmsr.sampling import SamplingOperator, apply_sampling, qdeim_select
from qmsr.training import (
    TrainingConfig,
    fit_weights,
    greedy_objective_direct,
    greedy_objective_reduced,
    train_gappy_pod,
    train_qm_full,
    train_qmsr,
)

__version__ = "0.1.0"

__all__ = [
    "GaussNewtonConfig",
    "QMSRError",
    "QuadraticManifoldModel",
    "RankDeficientError",
    "SamplingOperator",
    "SvdFactors",
    "TrainingConfig",
    "ValidationError",
    "apply_sampling",
    "decode",
    "encode_full",
    "encode_gauss_newton",
    "encode_sparse",
    "fit_weights",
    "greedy_objective_direct",
    "greedy_objective_reduced",
    "pivoted_qr_column_order",
    "pseudo_inverse_apply",
    "qdeim_select",
    "quad_features",
    "quad_features_jacobian",
    "quad_features_matrix",
    "reconstruct",
    "reconstruction_error",
    "reduced_svd",
    "relative_error",
    "ridge_lsq_left",
    "train_gappy_pod",
    "train_qm_full",
    "train_qmsr",
]
