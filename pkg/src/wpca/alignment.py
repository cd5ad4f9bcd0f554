"""Rotation alignment of estimates to a known truth, and error metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .estimators import FactorFit, svd_topr
from .exceptions import AlignmentError, ParameterError, ValidationError

SINGULAR_TOL = 1e-12


@dataclass
class GroundTruth:
    """Simulation truth for one panel ``X = L F^T + E``.

    ``U, Sigma, V`` is the rank-r SVD of ``T^{-1/2} L F^T``; ``SigmaC`` and
    ``SigmaT`` are the cross-sectional and temporal noise covariances,
    ``Cov(vec E) = SigmaC (x) SigmaT``.
    """

    L: np.ndarray
    F: np.ndarray
    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray
    SigmaC: np.ndarray
    SigmaT: np.ndarray

    @property
    def r(self) -> int:
        return self.Sigma.size

    @property
    def N(self) -> int:
        return self.L.shape[0]

    @property
    def T(self) -> int:
        return self.F.shape[0]

    @property
    def M(self) -> np.ndarray:
        return self.L @ self.F.T

    @classmethod
    def from_factors(cls, L, F, SigmaC=None, SigmaT=None) -> "GroundTruth":
        L = np.asarray(L, dtype=float)
        F = np.asarray(F, dtype=float)
        if L.shape[1] != F.shape[1]:
            raise ValidationError("L and F must have the same number of columns")
        N, r = L.shape
        T = F.shape[0]
        U, s, V = svd_topr(L @ F.T / np.sqrt(T), r)
        SigmaC = np.eye(N) if SigmaC is None else np.asarray(SigmaC, dtype=float)
        SigmaT = np.eye(T) if SigmaT is None else np.asarray(SigmaT, dtype=float)
        return cls(L, F, U, s, V, SigmaC, SigmaT)


@dataclass
class RotationSet:
    R_U: np.ndarray
    R_V: np.ndarray
    B: np.ndarray
    R_L: np.ndarray
    R_F: np.ndarray
    H_U: np.ndarray
    H_V: np.ndarray


def sign_orthogonal(A: np.ndarray) -> np.ndarray:
    """Orthogonal polar factor ``W1 W2^T`` of ``A = W1 D W2^T``.

    Raises :class:`AlignmentError` if ``A`` is numerically singular, which
    happens when the two subspaces being aligned are nearly orthogonal.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got {A.shape}")
    W1, d, W2t = np.linalg.svd(A)
    if d[-1] <= SINGULAR_TOL:
        raise AlignmentError(f"matrix is singular (smallest singular value {d[-1]:.3g})")
    return W1 @ W2t


def rotations(fit: FactorFit, truth: GroundTruth) -> RotationSet:
    """Rotations ``R_U, R_V``, the factor normalization ``B`` and ``R_L, R_F``.

    ``B`` solves ``V = T^{-1/2} F B`` by least squares, which is exact
    whenever ``F`` has full column rank.
    """
    if fit.r != truth.r:
        raise ParameterError(f"fit rank {fit.r} differs from true rank {truth.r}")
    T = truth.T
    H_U = fit.Uhat.T @ truth.U
    H_V = fit.Vhat.T @ truth.V
    R_U = sign_orthogonal(H_U)
    R_V = sign_orthogonal(H_V)
    B = np.sqrt(T) * np.linalg.lstsq(truth.F, truth.V, rcond=None)[0]
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError as exc:
        raise AlignmentError("factor normalization matrix is singular") from exc
    R_L = Binv.T @ R_V.T
    R_F = B @ R_V.T
    return RotationSet(R_U, R_V, B, R_L, R_F, H_U, H_V)


def two_to_inf(A: np.ndarray) -> float:
    """Largest row Euclidean norm."""
    A = np.atleast_2d(A)
    return float(np.max(np.linalg.norm(A, axis=1)))


def projector_distance(U1: np.ndarray, U2: np.ndarray, norm: str = "fro") -> float:
    """Norm of ``U1 U1^T - U2 U2^T``; ``norm`` is ``op``, ``fro`` or ``two_to_inf``."""
    U1 = np.atleast_2d(np.asarray(U1, dtype=float))
    U2 = np.atleast_2d(np.asarray(U2, dtype=float))
    if U1.shape != U2.shape:
        raise ValidationError(f"shape mismatch {U1.shape} vs {U2.shape}")
    if norm == "fro":
        # The trace identity 2r - 2||U1^T U2||_F^2 loses accuracy for nearby
        # subspaces; only use it when the N x N difference is too large.
        if U1.shape[0] <= 2000:
            return float(np.linalg.norm(U1 @ U1.T - U2 @ U2.T))
        c = np.linalg.norm(U1.T @ U2) ** 2
        return float(np.sqrt(max(2.0 * U1.shape[1] - 2.0 * c, 0.0)))
    D = U1 @ U1.T - U2 @ U2.T
    if norm == "op":
        return float(np.linalg.norm(D, 2))
    if norm == "two_to_inf":
        return two_to_inf(D)
    raise ParameterError(f"unknown norm {norm!r}")


@dataclass
class EstimationErrors:
    loading_op: float
    loading_2inf: float
    factor_op: float
    factor_2inf: float
    u_proj_fro: float
    u_proj_op: float
    v_proj_fro: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def estimation_errors(fit: FactorFit, truth: GroundTruth, rot: RotationSet | None = None) -> EstimationErrors:
    """Loading, factor and subspace errors after rotation alignment.

    Operator-norm loading and factor errors are scaled by ``1/sqrt(N)`` and
    ``1/sqrt(T)``; the two-to-infinity versions are unscaled.
    """
    if fit.Uhat.shape != truth.U.shape or fit.Vhat.shape != truth.V.shape:
        raise ValidationError("fit and truth have inconsistent shapes")
    if rot is None:
        rot = rotations(fit, truth)
    N, T = truth.N, truth.T
    dL = fit.Lhat - truth.L @ rot.R_L
    dF = fit.Fhat - truth.F @ rot.R_F
    return EstimationErrors(
        loading_op=float(np.linalg.norm(dL, 2)) / np.sqrt(N),
        loading_2inf=two_to_inf(dL),
        factor_op=float(np.linalg.norm(dF, 2)) / np.sqrt(T),
        factor_2inf=two_to_inf(dF),
        u_proj_fro=projector_distance(fit.Uhat, truth.U, "fro"),
        u_proj_op=projector_distance(fit.Uhat, truth.U, "op"),
        v_proj_fro=projector_distance(fit.Vhat, truth.V, "fro"),
    )
