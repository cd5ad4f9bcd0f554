"""Toeplitz weight vectors on the lag simplex.

A weight vector ``gamma = (g_0, ..., g_K)`` defines the symmetric banded
Toeplitz matrix ``Q`` with ``g_0`` on the diagonal and ``g_k`` on the k-th
sub- and super-diagonal.  ``Q`` is never formed for real panels; everything
here works through lagged cross-products of the columns of ``X``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exceptions import ParameterError, ValidationError

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ToeplitzWeights:
    """Nonnegative lag weights summing to one.

    Parameters
    ----------
    gamma : array_like
        Weights ``(g_0, ..., g_K)``.  Must be nonnegative and sum to one
        within ``1e-12``; use :meth:`normalized` for arbitrary nonnegative
        input.
    """

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float).reshape(-1)
        if g.size == 0:
            raise ValidationError("weight vector must have at least one entry")
        if not np.all(np.isfinite(g)):
            raise ValidationError("weights must be finite")
        if np.any(g < 0):
            raise ValidationError(f"weights must be nonnegative, got {g.tolist()}")
        if abs(g.sum() - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"weights must sum to 1, got sum {g.sum()!r}")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def normalized(cls, values: Sequence[float]) -> "ToeplitzWeights":
        v = np.asarray(values, dtype=float).reshape(-1)
        if np.any(v < 0):
            raise ValidationError("weights must be nonnegative")
        s = v.sum()
        if not s > 0:
            raise ValidationError("weights must have positive total mass")
        return cls(v / s)

    @classmethod
    def identity(cls) -> "ToeplitzWeights":
        """The weight ``Q = I``, i.e. ordinary PCA."""
        return cls(np.array([1.0]))

    @classmethod
    def lag(cls, k: int) -> "ToeplitzWeights":
        """All mass on lag ``k``."""
        if k < 0:
            raise ParameterError("lag must be nonnegative")
        g = np.zeros(k + 1)
        g[k] = 1.0
        return cls(g)

    @classmethod
    def banded(cls, B: int, include_diagonal: bool = False) -> "ToeplitzWeights":
        """Equal weight on lags ``1..B`` (and lag 0 when ``include_diagonal``).

        The variant without the diagonal is bias-free when the noise is
        temporally uncorrelated; the variant with it corresponds to
        ``Q[t, s] = 1{|t - s| <= B}`` up to scale.
        """
        if B < 1:
            raise ParameterError("band width must be at least 1")
        g = np.ones(B + 1)
        if not include_diagonal:
            g[0] = 0.0
        return cls.normalized(g)

    @property
    def K(self) -> int:
        return self.gamma.size - 1

    @property
    def max_lag(self) -> int:
        """Largest lag carrying positive weight."""
        return int(np.flatnonzero(self.gamma)[-1])

    def nonzero_lags(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.gamma)]

    def trimmed(self) -> "ToeplitzWeights":
        """Same weights with trailing zero lags dropped."""
        return ToeplitzWeights(self.gamma[: self.max_lag + 1])

    def allclose(self, other: "ToeplitzWeights", atol: float = SIMPLEX_TOL) -> bool:
        a, b = self.trimmed().gamma, other.trimmed().gamma
        return a.shape == b.shape and bool(np.all(np.abs(a - b) <= atol))

    def dense(self, T: int) -> np.ndarray:
        """Materialize the ``T x T`` matrix.  Only for small ``T``."""
        if self.max_lag >= T:
            raise ParameterError(f"max lag {self.max_lag} needs T > {self.max_lag}, got T={T}")
        Q = np.zeros((T, T))
        for k in self.nonzero_lags():
            idx = np.arange(T - k)
            Q[idx, idx + k] = self.gamma[k]
            Q[idx + k, idx] = self.gamma[k]
        return Q

    def to_json(self) -> str:
        return json.dumps(self.gamma.tolist())

    @classmethod
    def from_json(cls, text: str) -> "ToeplitzWeights":
        values = json.loads(text)
        if not isinstance(values, list):
            raise ValidationError("weights JSON must be an array of numbers")
        return cls(np.asarray(values, dtype=float))

    def __repr__(self) -> str:
        return f"ToeplitzWeights({np.array2string(self.gamma, precision=4, separator=', ')})"


@dataclass(frozen=True)
class WeightGrid:
    """Ordered, duplicate-free collection of candidate weights."""

    candidates: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        cands = tuple(self.candidates)
        if not cands:
            raise ValidationError("weight grid must be nonempty")
        for a, b in itertools.combinations(cands, 2):
            if a.allclose(b):
                raise ValidationError(f"duplicate grid candidates {a!r}")
        object.__setattr__(self, "candidates", cands)

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]

    def to_list(self) -> list[list[float]]:
        return [w.gamma.tolist() for w in self.candidates]


def _compositions(total: int, parts: int):
    # Descending lexicographic order on (c_0, c_1, ...).
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def build_grid(K: int, step: float) -> WeightGrid:
    """All lattice points of the lag-``K`` simplex with spacing ``step``.

    Coordinates are exact multiples of ``step``; ``1/step`` must be an
    integer.  Candidates are ordered lexicographically with larger ``g_0``
    first, so the identity weight ``(1, 0, ..., 0)`` always leads.

    Examples
    --------
    >>> [w.gamma.tolist() for w in build_grid(2, 0.5)]
    [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]]
    """
    if int(K) != K or K < 0:
        raise ParameterError(f"K must be a nonnegative integer, got {K}")
    if not 0 < step <= 1:
        raise ParameterError(f"step must lie in (0, 1], got {step}")
    n = round(1.0 / step)
    if abs(1.0 / step - n) > 1e-9 or n < 1:
        raise ParameterError(f"1/step must be an integer, got step={step}")
    cands = []
    for comp in _compositions(n, int(K) + 1):
        g = np.array([float(Fraction(c, n)) for c in comp])
        # Rounding of the rationals can leave the sum a few ulps off one.
        g[int(np.argmax(g))] += 1.0 - g.sum()
        cands.append(ToeplitzWeights(g))
    return WeightGrid(tuple(cands), {"K": int(K), "step": float(step), "lattice_n": n})


def grid_from_gammas(gammas: Sequence[Sequence[float]]) -> WeightGrid:
    return WeightGrid(tuple(ToeplitzWeights(np.asarray(g, dtype=float)) for g in gammas), {"kind": "explicit"})


def lag_grams(X: np.ndarray, lags: Sequence[int]) -> dict[int, np.ndarray]:
    """Symmetric lag cross-product matrices of the columns of ``X``.

    Returns ``{k: S_k}`` with ``S_0 = sum_t x_t x_t^T`` and
    ``S_k = sum_t (x_t x_{t+k}^T + x_{t+k} x_t^T)`` for ``k >= 1``.
    Each ``S_k`` is exactly symmetric.
    """
    X = np.asarray(X, dtype=float)
    T = X.shape[1]
    out = {}
    for k in lags:
        if k >= T:
            raise ParameterError(f"lag {k} requires T > {k}, got T={T}")
        if k == 0:
            C = X @ X.T
        else:
            C = X[:, :-k] @ X[:, k:].T
        out[k] = C + C.T if k else 0.5 * (C + C.T)
    return out


def combine_lag_grams(w: ToeplitzWeights, grams: dict[int, np.ndarray]) -> np.ndarray:
    lags = w.nonzero_lags()
    G = w.gamma[lags[0]] * grams[lags[0]]
    for k in lags[1:]:
        G = G + w.gamma[k] * grams[k]
    return G


def weighted_gram(X: np.ndarray, w: ToeplitzWeights) -> np.ndarray:
    """``X Q X^T`` for the Toeplitz matrix ``Q`` defined by ``w``.

    Cost is one ``N x N`` cross-product per nonzero lag; ``Q`` is never
    built.  The result is exactly symmetric.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("panel must be a 2-D array")
    if w.max_lag >= X.shape[1]:
        raise ParameterError(f"max lag {w.max_lag} must be below T={X.shape[1]}")
    return combine_lag_grams(w, lag_grams(X, w.nonzero_lags()))


def toeplitz_apply(w: ToeplitzWeights, Y: np.ndarray) -> np.ndarray:
    """``Q @ Y`` for a ``T x m`` array ``Y`` without forming ``Q``."""
    Y = np.asarray(Y, dtype=float)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    T = Y.shape[0]
    if w.max_lag >= T:
        raise ParameterError(f"max lag {w.max_lag} must be below T={T}")
    out = np.zeros_like(Y)
    for k in w.nonzero_lags():
        g = w.gamma[k]
        if k == 0:
            out += g * Y
        else:
            out[:-k] += g * Y[k:]
            out[k:] += g * Y[:-k]
    return out[:, 0] if squeeze else out


def mu_gamma(w: ToeplitzWeights, autocovs: Sequence[np.ndarray], T: float | None = None, r: int | None = None) -> float:
    """Signal diagnostic for weights ``w`` given factor auto-covariances.

    Returns the r-th largest singular value of
    ``g_0 I + sum_k g_k (1 - k/T) (G_k + G_k^T)`` where ``autocovs[k-1]``
    is the lag-``k`` auto-covariance ``E f_1 f_{1+k}^T``.  ``T=None``
    takes the ``T -> infinity`` limit.  Purely descriptive.
    """
    mats = [np.atleast_2d(np.asarray(G, dtype=float)) for G in autocovs]
    if mats:
        r0 = mats[0].shape[0]
        if any(G.shape != (r0, r0) for G in mats):
            raise ParameterError("auto-covariances must all be square with equal size")
        if r is not None and r != r0:
            raise ParameterError(f"r={r} does not match auto-covariance size {r0}")
        r = r0
    elif r is None:
        raise ParameterError("r must be given when no auto-covariances are supplied")
    if T is not None and T < w.max_lag:
        raise ParameterError(f"T={T} must be at least the max lag {w.max_lag}")
    S = w.gamma[0] * np.eye(r)
    for k in range(1, w.K + 1):
        if w.gamma[k] == 0:
            continue
        if k > len(mats):
            raise ParameterError(f"weight on lag {k} but only {len(mats)} auto-covariances given")
        shrink = 1.0 if T is None else 1.0 - k / T
        S = S + w.gamma[k] * shrink * (mats[k - 1] + mats[k - 1].T)
    return float(np.linalg.svd(S, compute_uv=False)[r - 1])
