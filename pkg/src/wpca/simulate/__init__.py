"""Simulation: data-generating processes, oracle covariances and studies."""

from .dgp import (
    LOADING_SCALE,
    DgpConfig,
    NoiseSpec,
    diagonal_setting,
    equicorr_setting,
    gen_loadings,
    gen_noise,
    gen_smooth_factors,
    gen_var_factors,
    simulate_panel,
)
from .oracle import oracle_sigma_F, oracle_sigma_L, weighted_signal_eig
from .studies import (
    InferenceSample,
    StudyResult,
    default_grid,
    run_cv_study,
    run_estimation_study,
    run_inference_study,
)

__all__ = [
    "LOADING_SCALE",
    "DgpConfig",
    "NoiseSpec",
    "diagonal_setting",
    "equicorr_setting",
    "gen_loadings",
    "gen_noise",
    "gen_smooth_factors",
    "gen_var_factors",
    "simulate_panel",
    "oracle_sigma_F",
    "oracle_sigma_L",
    "weighted_signal_eig",
    "InferenceSample",
    "StudyResult",
    "default_grid",
    "run_cv_study",
    "run_estimation_study",
    "run_inference_study",
]
