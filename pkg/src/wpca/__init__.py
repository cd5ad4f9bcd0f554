"""Weighted PCA for approximate factor models with Toeplitz lag weights."""

from .adacv import CvReport, MaskPattern, ada_wpca, cv_error, draw_mask, masked_fit
from .alignment import GroundTruth, estimation_errors, projector_distance, rotations, sign_orthogonal
from .estimators import FactorFit, Panel, estimate_rank, hetero_pca, hetero_pca_fit, pca, wpca
from .exceptions import InputError, NumericalError, WPCAError
from .weights import ToeplitzWeights, WeightGrid, build_grid, weighted_gram

__version__ = "0.1.0"

__all__ = [
    "CvReport",
    "MaskPattern",
    "ada_wpca",
    "cv_error",
    "draw_mask",
    "masked_fit",
    "GroundTruth",
    "estimation_errors",
    "projector_distance",
    "rotations",
    "sign_orthogonal",
    "FactorFit",
    "Panel",
    "estimate_rank",
    "hetero_pca",
    "hetero_pca_fit",
    "pca",
    "wpca",
    "InputError",
    "NumericalError",
    "WPCAError",
    "ToeplitzWeights",
    "WeightGrid",
    "build_grid",
    "weighted_gram",
]
