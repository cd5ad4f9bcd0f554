"""Oracle asymptotic covariances of estimated loading rows and factor rows.

These use the true noise covariances and the true low-rank signal, so they
are only available in simulation.  They serve to standardize estimation
errors when checking asymptotic normality.
"""

from __future__ import annotations

import numpy as np

from ..alignment import GroundTruth, rotations
from ..estimators import FactorFit, sym_eig_topr
from ..exceptions import DegeneracyError, ParameterError
from ..weights import ToeplitzWeights, toeplitz_apply


def _sym(A):
    return 0.5 * (A + A.T)


def weighted_signal_eig(truth: GroundTruth, w: ToeplitzWeights) -> tuple[np.ndarray, np.ndarray]:
    """Signed top-r eigenpairs of ``M Q M^T`` for the true signal ``M = L F^T``.

    Eigenvalues are kept signed: ``Q`` need not be positive semidefinite
    and the sign enters the first-order expansion of the eigenvectors.
    """
    FQF = _sym(truth.F.T @ toeplitz_apply(w, truth.F))
    # M Q M^T = L (F^T Q F) L^T; work in the r-dimensional column space of L.
    Qc, Rc = np.linalg.qr(truth.L)
    core = _sym(Rc @ FQF @ Rc.T)
    vals, W = sym_eig_topr(core, truth.r)
    return vals, Qc @ W


def _R_V(truth, fit, R_V):
    if R_V is not None:
        return np.atleast_2d(R_V)
    if fit is None:
        raise ParameterError("either fit or R_V is required")
    return rotations(fit, truth).R_V


def oracle_sigma_L(truth: GroundTruth, w: ToeplitzWeights, fit: FactorFit | None, i: int, R_V=None) -> np.ndarray:
    """Asymptotic covariance of row ``i`` of ``Lhat - L R_L``.

    ``T [SigmaC]_ii O^T Sigma V^T Q SigmaT Q V Sigma O`` with
    ``O = Obar^T Lambda_bar^{-1} Obar Sigma R_V^T``, where ``Ubar`` and
    ``Lambda_bar`` are the leading eigenpairs of ``M Q M^T`` and
    ``Ubar Obar = U``.  Invariant to rescaling ``Q``.
    """
    N, T = truth.N, truth.T
    if not 0 <= i < N:
        raise ParameterError(f"row index {i} out of range for N={N}")
    R_V = _R_V(truth, fit, R_V)
    lam_bar, Ubar = weighted_signal_eig(truth, w)
    scale = max(1.0, float(np.max(np.abs(lam_bar))))
    if np.min(np.abs(lam_bar)) <= 1e-12 * scale:
        raise DegeneracyError("M Q M^T has fewer than r nonzero eigenvalues")
    Obar = Ubar.T @ truth.U
    S = np.diag(truth.Sigma)
    O_F = Obar.T @ np.diag(1.0 / lam_bar) @ Obar @ S @ R_V.T
    QV = toeplitz_apply(w, truth.V)
    inner = _sym(QV.T @ truth.SigmaT @ QV)
    out = T * truth.SigmaC[i, i] * O_F.T @ S @ inner @ S @ O_F
    return _sym(out)


def oracle_sigma_F(truth: GroundTruth, fit: FactorFit | None, t: int, R_V=None) -> np.ndarray:
    """Asymptotic covariance of row ``t`` of ``Fhat - F R_F``.

    ``[SigmaT]_tt R_V Sigma^{-1} U^T SigmaC U Sigma^{-1} R_V^T``.
    """
    if not 0 <= t < truth.T:
        raise ParameterError(f"time index {t} out of range for T={truth.T}")
    R_V = _R_V(truth, fit, R_V)
    if np.min(truth.Sigma) <= 0:
        raise DegeneracyError("true singular values must be positive")
    Si = np.diag(1.0 / truth.Sigma)
    core = truth.U.T @ truth.SigmaC @ truth.U
    return _sym(truth.SigmaT[t, t] * R_V @ Si @ core @ Si @ R_V.T)


def inv_sqrt_psd(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(_sym(S))
    if vals[0] <= 0:
        raise DegeneracyError("covariance is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T
