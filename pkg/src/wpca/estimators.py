"""Weighted PCA, ordinary PCA, HeteroPCA and the eigenvalue-ratio rank estimator.

All estimators take an ``N x T`` panel (units in rows, time in columns).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import DegeneracyError, ParameterError, RankDeficiencyError, ValidationError
from .weights import ToeplitzWeights, combine_lag_grams, weighted_gram

SYM_TOL = 1e-10


@dataclass
class Panel:
    """An ``N x T`` observation matrix with optional labels."""

    X: np.ndarray
    unit_labels: list[str] | None = None
    time_labels: list[str] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValidationError(f"panel must be a nonempty 2-D array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("panel entries must be finite")
        if self.unit_labels is not None and len(self.unit_labels) != X.shape[0]:
            raise ValidationError("unit_labels length does not match N")
        if self.time_labels is not None and len(self.time_labels) != X.shape[1]:
            raise ValidationError("time_labels length does not match T")
        self.X = X

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]


def as_array(X) -> np.ndarray:
    if isinstance(X, Panel):
        return X.X
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"panel must be 2-D, got shape {X.shape}")
    return X


@dataclass
class FactorFit:
    """Output of a two-step factor fit.

    ``Lhat = Uhat * sigma`` and ``Fhat = sqrt(T) * Vhat``, so the fitted
    common component is ``Lhat @ Fhat.T = sqrt(T) Uhat diag(sigma) Vhat^T``.
    """

    Uhat: np.ndarray
    Vhat: np.ndarray
    sigma: np.ndarray
    weights_used: ToeplitzWeights | None
    Utilde: np.ndarray | None = None
    method: str = "wpca"
    Lhat: np.ndarray = field(init=False)
    Fhat: np.ndarray = field(init=False)

    def __post_init__(self):
        self.Lhat = self.Uhat * self.sigma
        self.Fhat = np.sqrt(self.Vhat.shape[0]) * self.Vhat

    @property
    def r(self) -> int:
        return self.sigma.size

    @property
    def N(self) -> int:
        return self.Uhat.shape[0]

    @property
    def T(self) -> int:
        return self.Vhat.shape[0]

    def common_component(self) -> np.ndarray:
        return self.Lhat @ self.Fhat.T

    def save(self, directory) -> Path:
        """Write ``Uhat.csv``, ``Vhat.csv``, ``sigma.csv`` and ``meta.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / "Uhat.csv", self.Uhat, delimiter=",", fmt="%.17g")
        np.savetxt(d / "Vhat.csv", self.Vhat, delimiter=",", fmt="%.17g")
        np.savetxt(d / "sigma.csv", self.sigma, delimiter=",", fmt="%.17g")
        meta = {
            "method": self.method,
            "N": self.N,
            "T": self.T,
            "r": self.r,
            "gamma": None if self.weights_used is None else self.weights_used.gamma.tolist(),
            "layout": {
                "Uhat.csv": "N rows (units) x r columns, orthonormal columns",
                "Vhat.csv": "T rows (time points) x r columns, orthonormal columns",
                "sigma.csv": "r singular values, descending, one per line",
                "Lhat": "Uhat * sigma (column-wise)",
                "Fhat": "sqrt(T) * Vhat",
            },
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=2))
        return d

    @classmethod
    def load(cls, directory) -> "FactorFit":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        r = meta["r"]
        U = np.loadtxt(d / "Uhat.csv", delimiter=",", ndmin=2).reshape(meta["N"], r)
        V = np.loadtxt(d / "Vhat.csv", delimiter=",", ndmin=2).reshape(meta["T"], r)
        s = np.atleast_1d(np.loadtxt(d / "sigma.csv", delimiter=","))
        gamma = meta.get("gamma")
        w = None if gamma is None else ToeplitzWeights(np.asarray(gamma))
        return cls(U, V, s, w, method=meta.get("method", "wpca"))


def _fix_signs(U: np.ndarray, *others: np.ndarray):
    # Largest-magnitude entry of each column made positive; first index wins ties.
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return (U * s,) + tuple(M * s for M in others)


def _check_rank(r, upper, what="r"):
    if int(r) != r or r < 1:
        raise ParameterError(f"{what} must be a positive integer, got {r}")
    if r > upper:
        raise ParameterError(f"{what}={r} exceeds the admissible maximum {upper}")


def sym_eig_topr(S: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix with the ``r`` largest ``|eigenvalue|``.

    Returns ``(values, vectors)`` with values ordered by decreasing
    magnitude (signed values are kept) and each eigenvector's
    largest-magnitude coordinate positive.  Among equal magnitudes the
    backend's ascending order is kept, which makes degenerate spectra
    deterministic.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {S.shape}")
    N = S.shape[0]
    _check_rank(r, N)
    scale = max(1.0, float(np.max(np.abs(S))) if S.size else 1.0)
    if np.max(np.abs(S - S.T)) > SYM_TOL * scale:
        raise ValidationError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(-np.abs(vals), kind="stable")[:r]
    (V,) = _fix_signs(vecs[:, order])
    return vals[order], V


def svd_topr(M: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leading ``r`` singular triplets ``(U, sigma, V)`` with ``M ~ U diag(sigma) V^T``.

    Sign convention follows :func:`sym_eig_topr` on ``U``; ``V`` is flipped
    along with it.  Raises :class:`RankDeficiencyError` when ``M`` has
    fewer than ``r`` numerically positive singular values.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValidationError("expected a 2-D array")
    _check_rank(r, min(M.shape))
    W, s, Zt = np.linalg.svd(M, full_matrices=False)
    tiny = max(M.shape) * np.finfo(float).eps * (s[0] if s[0] > 0 else 1.0)
    if not s[0] > 0 or s[r - 1] <= tiny:
        raise RankDeficiencyError(f"matrix has fewer than {r} positive singular values")
    U, V = _fix_signs(W[:, :r], Zt[:r].T)
    return U, s[:r].copy(), V


def refine(X, Utilde: np.ndarray, weights: ToeplitzWeights | None = None, method: str = "wpca") -> FactorFit:
    """Second step: rank-r SVD of ``T^{-1/2} Utilde Utilde^T X``.

    Works through the ``r x T`` matrix ``Utilde^T X``; since ``Utilde`` has
    orthonormal columns its left singular vectors map back through
    ``Utilde`` without changing the singular values.
    """
    X = as_array(X)
    r = Utilde.shape[1]
    T = X.shape[1]
    A, s, V = svd_topr(Utilde.T @ X, r)
    U, V = _fix_signs(Utilde @ A, V)
    return FactorFit(U, V, s / np.sqrt(T), weights, Utilde=Utilde, method=method)


def _check_weights(w: ToeplitzWeights, T: int):
    if w.max_lag > T / 2:
        raise ParameterError(f"max lag {w.max_lag} exceeds T/2 = {T / 2}")


def wpca(X, w: ToeplitzWeights, r: int) -> FactorFit:
    """Weighted PCA.

    Step one takes the leading ``r`` eigenvectors (by absolute eigenvalue)
    of ``X Q X^T``; step two projects ``X`` on them and takes the rank-r
    SVD of the projection scaled by ``T^{-1/2}``.

    Parameters
    ----------
    X : array_like or Panel
        ``N x T`` panel.
    w : ToeplitzWeights
        Lag weights; largest positive lag must not exceed ``T/2``.
    r : int
        Number of factors, ``1 <= r <= min(N, T)``.
    """
    X = as_array(X)
    _check_rank(r, min(X.shape))
    _check_weights(w, X.shape[1])
    return wpca_from_gram(X, weighted_gram(X, w), w, r)


def wpca_from_gram(X: np.ndarray, G: np.ndarray, w: ToeplitzWeights | None, r: int, method: str = "wpca") -> FactorFit:
    _, Ut = sym_eig_topr(G, r)
    return refine(X, Ut, w, method=method)


def wpca_cached(X: np.ndarray, grams: dict, w: ToeplitzWeights, r: int) -> FactorFit:
    """:func:`wpca` reusing precomputed lag Gram matrices of ``X``."""
    _check_rank(r, min(X.shape))
    _check_weights(w, X.shape[1])
    return wpca_from_gram(X, combine_lag_grams(w, grams), w, r)


def pca(X, r: int) -> FactorFit:
    """Ordinary PCA, i.e. :func:`wpca` with ``Q = I``."""
    fit = wpca(X, ToeplitzWeights.identity(), r)
    fit.method = "pca"
    return fit


def hetero_pca(
    X,
    r: int,
    max_iter: int = 20,
    tol: float = 1e-6,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """HeteroPCA: eigenspace of ``X X^T`` with an iteratively imputed diagonal.

    Starts from ``X X^T`` with its diagonal deleted and repeatedly replaces
    the diagonal by that of the rank-r truncation of the current matrix.
    Stops once the largest diagonal change falls below
    ``tol * max|X X^T|`` or after ``max_iter`` updates.  ``callback`` is
    called as ``callback(k, M)`` with each iterate, starting at ``k = 0``.

    Returns the ``N x r`` orthonormal eigenvector matrix of the final iterate.
    """
    X = as_array(X)
    N = X.shape[0]
    _check_rank(r, N)
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")
    G = X @ X.T
    G = 0.5 * (G + G.T)
    off = G - np.diag(np.diag(G))
    thresh = tol * float(np.max(np.abs(G)))
    M = off.copy()
    if callback is not None:
        callback(0, M)
    for k in range(1, max_iter + 1):
        vals, vecs = sym_eig_topr(M, r)
        new_diag = np.einsum("ij,j,ij->i", vecs, vals, vecs)
        change = float(np.max(np.abs(new_diag - np.diag(M))))
        M = off + np.diag(new_diag)
        if callback is not None:
            callback(k, M)
        if change <= thresh:
            break
    return sym_eig_topr(M, r)[1]


def hetero_pca_fit(X, r: int, max_iter: int = 20, tol: float = 1e-6) -> FactorFit:
    """HeteroPCA eigenvectors completed to a full fit by the projection step."""
    return refine(X, hetero_pca(X, r, max_iter=max_iter, tol=tol), None, method="heteropca")


RATIO_FLOOR = 1e-12


def rank_ratios(X, Rmax: int | None = None) -> np.ndarray:
    """Consecutive eigenvalue ratios ``s_{j+1}/s_j`` of ``X X^T`` for ``j = 1..Rmax``."""
    X = as_array(X)
    N, T = X.shape
    if Rmax is None:
        Rmax = N // 2
    if int(Rmax) != Rmax or Rmax < 1:
        raise ParameterError(f"Rmax must be a positive integer, got {Rmax}")
    if Rmax > min(N, T) - 1:
        raise ParameterError(f"Rmax={Rmax} exceeds min(N, T) - 1 = {min(N, T) - 1}")
    G = X @ X.T
    ev = np.linalg.eigvalsh(0.5 * (G + G.T))[::-1]
    if not ev[0] > 0:
        raise DegeneracyError("panel is identically zero")
    floored = np.maximum(ev[: Rmax + 1], RATIO_FLOOR * ev[0])
    return floored[1:] / floored[:-1]


def estimate_rank(X, Rmax: int | None = None) -> int:
    """Number of factors minimizing the consecutive eigenvalue ratio.

    Ties go to the smallest index.  ``Rmax`` defaults to ``N // 2``.
    """
    return int(np.argmin(rank_ratios(X, Rmax))) + 1


def fit_method(method: str, X, r: int, w: ToeplitzWeights | None = None, **kw) -> FactorFit:
    """Dispatch by name over ``wpca``, ``pca`` and ``heteropca``."""
    if method == "wpca":
        if w is None:
            raise ParameterError("wpca requires weights")
        return wpca(X, w, r)
    if method == "pca":
        return pca(X, r)
    if method == "heteropca":
        return hetero_pca_fit(X, r, **kw)
    raise ParameterError(f"unknown method {method!r}")
