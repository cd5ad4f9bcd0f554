"""Adaptive choice of Toeplitz weights by entry-masking cross-validation.

Each draw hides a Bernoulli subset of entries, fits weighted PCA on the
rescaled retained panel and scores every candidate on the hidden entries.
One mask per draw is shared by all candidates.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimators import FactorFit, _check_rank, as_array, refine, sym_eig_topr, wpca
from .exceptions import EmptyHoldoutWarning, NumericalError, ParameterError, ValidationError
from .weights import ToeplitzWeights, WeightGrid, combine_lag_grams, lag_grams

DEFAULT_PSTAR = 0.9
DEFAULT_KCV = 10


@dataclass
class MaskPattern:
    """Binary retention mask; ``omega[i, t]`` is True where ``X[i, t]`` is kept."""

    omega: np.ndarray
    pstar: float
    seed: int | None = None

    def __post_init__(self):
        om = np.asarray(self.omega)
        if om.ndim != 2:
            raise ValidationError("mask must be 2-D")
        if om.dtype != bool:
            if not np.all((om == 0) | (om == 1)):
                raise ValidationError("mask entries must be 0 or 1")
            om = om.astype(bool)
        _check_pstar(self.pstar)
        self.omega = om

    @property
    def holdout(self) -> np.ndarray:
        return ~self.omega

    @property
    def density(self) -> float:
        return float(self.omega.mean())

    def digest(self) -> str:
        return hashlib.sha256(np.packbits(self.omega).tobytes() + str(self.omega.shape).encode()).hexdigest()[:16]


def _check_pstar(pstar):
    if not 0 < pstar <= 1:
        raise ParameterError(f"retention rate must lie in (0, 1], got {pstar}")


def draw_mask(N: int, T: int, pstar: float, seed) -> MaskPattern:
    """i.i.d. Bernoulli(``pstar``) retention mask, deterministic in ``seed``."""
    _check_pstar(pstar)
    rng = np.random.default_rng(seed)
    return MaskPattern(rng.random((N, T)) < pstar, pstar, seed if isinstance(seed, (int, np.integer)) else None)


def masked_panel(X, mask: MaskPattern) -> np.ndarray:
    X = as_array(X)
    if mask.omega.shape != X.shape:
        raise ValidationError(f"mask shape {mask.omega.shape} does not match panel {X.shape}")
    return np.where(mask.omega, X, 0.0) / mask.pstar


def masked_fit(X, mask: MaskPattern, w: ToeplitzWeights, r: int) -> FactorFit:
    """Weighted PCA of ``pstar^{-1} (omega * X)``."""
    return wpca(masked_panel(X, mask), w, r)


def cv_error(X, mask: MaskPattern, fit: FactorFit | np.ndarray | None) -> float:
    """Held-out squared reconstruction error divided by ``N T``.

    ``fit`` may be a :class:`FactorFit`, an ``N x T`` fitted common
    component, or ``None`` for the zero fit.  An empty validation set scores
    zero and emits :class:`EmptyHoldoutWarning`.
    """
    X = as_array(X)
    hold = mask.holdout
    if hold.shape != X.shape:
        raise ValidationError("mask shape does not match panel")
    N, T = X.shape
    if not hold.any():
        warnings.warn("validation set is empty; CV error set to 0", EmptyHoldoutWarning, stacklevel=2)
        return 0.0
    if fit is None:
        resid = X[hold]
    else:
        C = fit.common_component() if isinstance(fit, FactorFit) else np.asarray(fit, dtype=float)
        resid = X[hold] - C[hold]
    return float(resid @ resid) / (N * T)


@dataclass
class CvReport:
    candidates: list[ToeplitzWeights]
    ranks: list[int]
    cv: np.ndarray
    mean_cv: np.ndarray
    chosen_index: int
    K_cv: int
    pstar: float
    seeds: list[int]
    mask_digests: list[str]
    joint_rank: bool = False
    empty_holdout: bool = False
    diagnostics: list[str] = field(default_factory=list)

    @property
    def chosen_weights(self) -> ToeplitzWeights:
        return self.candidates[self.chosen_index]

    @property
    def chosen_rank(self) -> int | None:
        return self.ranks[self.chosen_index] if self.joint_rank else None

    def as_dict(self) -> dict:
        return {
            "candidates": [w.gamma.tolist() for w in self.candidates],
            "ranks": list(self.ranks),
            "cv_per_draw": [[_jsonable(v) for v in row] for row in self.cv],
            "mean_cv": [_jsonable(v) for v in self.mean_cv],
            "chosen_index": self.chosen_index,
            "chosen_gamma": self.chosen_weights.gamma.tolist(),
            "chosen_rank": self.chosen_rank,
            "K_cv": self.K_cv,
            "pstar": self.pstar,
            "seeds": list(self.seeds),
            "mask_digests": list(self.mask_digests),
            "empty_holdout": self.empty_holdout,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)


def _jsonable(v: float):
    return v if np.isfinite(v) else str(v)


def _score_weight(Xm, X, mask, grams, w, ranks):
    # One eigendecomposition per weight serves every requested rank.
    out = []
    try:
        G = combine_lag_grams(w, grams)
        _, vecs = sym_eig_topr(G, max(ranks))
    except NumericalError as exc:
        return [(np.inf, f"{w!r}: {exc}")] * len(ranks)
    for r in ranks:
        try:
            fit = refine(Xm, vecs[:, :r], w)
        except NumericalError as exc:
            out.append((np.inf, f"{w!r}, r={r}: {exc}"))
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyHoldoutWarning)
            out.append((cv_error(X, mask, fit), None))
    return out


def ada_wpca(
    X,
    grid: WeightGrid | Sequence[ToeplitzWeights],
    r: int,
    K_cv: int = DEFAULT_KCV,
    pstar: float = DEFAULT_PSTAR,
    seed: int = 0,
    ranks: Sequence[int] | None = None,
    n_jobs: int = 1,
) -> tuple[CvReport, FactorFit]:
    """Choose weights (and optionally the rank) by masked cross-validation.

    Draw ``j`` uses the mask seeded by ``seed + j``.  The candidate with the
    smallest CV error averaged over draws wins, earliest candidate on ties,
    and the returned fit is weighted PCA of the full panel with it.  When
    ``ranks`` is given, ``(weights, rank)`` pairs are searched jointly and
    ``r`` is ignored.  Candidates whose fit fails score ``inf``.
    """
    X = as_array(X)
    N, T = X.shape
    cands = list(grid)
    if not cands:
        raise ParameterError("candidate grid is empty")
    if int(K_cv) != K_cv or K_cv < 1:
        raise ParameterError(f"K_cv must be a positive integer, got {K_cv}")
    _check_pstar(pstar)
    joint = ranks is not None
    rank_list = sorted({int(k) for k in ranks}) if joint else [int(r)]
    if not rank_list:
        raise ParameterError("ranks must be nonempty")
    for k in rank_list:
        _check_rank(k, min(N, T))
    for w in cands:
        if w.max_lag > T / 2:
            raise ParameterError(f"candidate {w!r} has max lag above T/2")
    lags = sorted({k for w in cands for k in w.nonzero_lags()})
    M = len(cands) * len(rank_list)
    cv = np.empty((int(K_cv), M))
    seeds = [int(seed) + j for j in range(int(K_cv))]
    digests, notes = [], []
    empty = False
    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        for j, s in enumerate(seeds):
            mask = draw_mask(N, T, pstar, s)
            digests.append(mask.digest())
            empty = empty or not mask.holdout.any()
            Xm = masked_panel(X, mask)
            grams = lag_grams(Xm, lags)
            args = [(Xm, X, mask, grams, w, rank_list) for w in cands]
            results = list(pool.map(lambda a: _score_weight(*a), args)) if pool else [_score_weight(*a) for a in args]
            for c, per_rank in enumerate(results):
                for q, (val, note) in enumerate(per_rank):
                    cv[j, c * len(rank_list) + q] = val
                    if note is not None:
                        notes.append(f"draw {j}: {note}")
    finally:
        if pool is not None:
            pool.shutdown()
    mean_cv = cv.mean(axis=0)
    if not np.any(np.isfinite(mean_cv)):
        raise NumericalError("every candidate fit failed")
    chosen = int(np.argmin(mean_cv))
    if empty:
        notes.append("empty validation set in at least one draw")
    report = CvReport(
        candidates=[cands[i // len(rank_list)] for i in range(M)],
        ranks=[rank_list[i % len(rank_list)] for i in range(M)],
        cv=cv,
        mean_cv=mean_cv,
        chosen_index=chosen,
        K_cv=int(K_cv),
        pstar=float(pstar),
        seeds=seeds,
        mask_digests=digests,
        joint_rank=joint,
        empty_holdout=empty,
        diagnostics=notes,
    )
    final_r = report.ranks[chosen]
    fit = wpca(X, report.chosen_weights, final_r)
    fit.method = "adawpca"
    return report, fit
