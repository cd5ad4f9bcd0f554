"""Monte Carlo studies: estimation accuracy, CV selection quality, normality.

Replicate ``k`` of a study seeded with ``seed`` draws everything from
``SeedSequence([seed, cell, k])``, so results do not depend on execution
order or on how many worker processes are used.  Reductions run in
replicate order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from ..adacv import DEFAULT_KCV, DEFAULT_PSTAR, ada_wpca
from ..alignment import projector_distance, rotations
from ..estimators import hetero_pca_fit, pca, wpca
from ..exceptions import NumericalError, ParameterError
from ..weights import ToeplitzWeights, WeightGrid, build_grid
from .dgp import DgpConfig, simulate_panel
from .oracle import inv_sqrt_psd, oracle_sigma_F, oracle_sigma_L

log = logging.getLogger(__name__)

METHODS = ("adawpca", "pca", "heteropca")


def default_grid() -> WeightGrid:
    """Lag-0/lag-1 blends ``(g, 1 - g)`` for ``g`` in ``{0, 1/9, ..., 1}``."""
    return build_grid(1, 1.0 / 9.0)


def replicate_seed(seed: int, cell: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(cell), int(k)])


def _cv_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def _run_tasks(fn: Callable, tasks: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n_jobs))))


@dataclass
class StudyRow:
    N: int
    T: int
    setting: str
    method: str
    metric: str
    mean: float
    sd: float
    replicates: int
    failures: int = 0


@dataclass
class StudyResult:
    rows: list[StudyRow]
    meta: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def get(self, N: int, T: int, method: str, metric: str, setting: str | None = None) -> StudyRow:
        for row in self.rows:
            if (row.N, row.T, row.method, row.metric) == (N, T, method, metric) and (
                setting is None or row.setting == setting
            ):
                return row
        raise KeyError((N, T, method, metric, setting))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        names = list(StudyRow.__dataclass_fields__)
        writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            d = asdict(row)
            d["mean"] = repr(float(d["mean"]))
            d["sd"] = repr(float(d["sd"]))
            writer.writerow(d)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_json(self, **kw) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows], "meta": self.meta}, **kw)


def _summarize(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), sd


# ---------------------------------------------------------------- estimation


def _estimation_replicate(task):
    cfg, ss, grid, K_cv, pstar, methods = task
    s_data, s_cv = ss.spawn(2)
    X, truth = simulate_panel(cfg, s_data)
    out = {}
    for m in methods:
        try:
            if m == "adawpca":
                _, fit = ada_wpca(X, grid, cfg.r, K_cv=K_cv, pstar=pstar, seed=_cv_seed(s_cv))
            elif m == "pca":
                fit = pca(X, cfg.r)
            elif m == "heteropca":
                fit = hetero_pca_fit(X, cfg.r)
            else:
                raise ParameterError(f"unknown method {m!r}")
            out[m] = (projector_distance(fit.Uhat, truth.U), projector_distance(fit.Vhat, truth.V))
        except NumericalError as exc:
            out[m] = str(exc)
    return out


def run_estimation_study(
    configs: Iterable[DgpConfig],
    reps: int = 100,
    seed: int = 0,
    grid: WeightGrid | None = None,
    K_cv: int = DEFAULT_KCV,
    pstar: float = DEFAULT_PSTAR,
    methods: Sequence[str] = METHODS,
    n_jobs: int = 1,
) -> StudyResult:
    """Frobenius projector errors of ``Uhat`` and ``Vhat`` per method and cell.

    HeteroPCA's ``Vhat`` comes from applying the projection step to its
    ``Uhat``.  Failed replicates are excluded from the mean and counted.
    """
    if reps < 1:
        raise ParameterError("reps must be at least 1")
    grid = grid or default_grid()
    rows, raw = [], {}
    for c, cfg in enumerate(configs):
        tasks = [(cfg, replicate_seed(seed, c, k), grid, K_cv, pstar, tuple(methods)) for k in range(reps)]
        results = _run_tasks(_estimation_replicate, tasks, n_jobs)
        for m in methods:
            ok = [res[m] for res in results if not isinstance(res[m], str)]
            fails = reps - len(ok)
            if fails:
                log.warning("%s: %d of %d replicates failed for %s", cfg.label, fails, reps, m)
            for j, metric in enumerate(("u_fro", "v_fro")):
                vals = [pair[j] for pair in ok]
                mean, sd = _summarize(vals)
                rows.append(StudyRow(cfg.N, cfg.T, cfg.label, m, metric, mean, sd, len(ok), fails))
                raw[(c, m, metric)] = vals
    meta = {"study": "estimation", "reps": reps, "seed": seed, "K_cv": K_cv, "pstar": pstar, "grid": grid.to_list()}
    return StudyResult(rows, meta, raw)


# ------------------------------------------------------------------------ CV


def _cv_replicate(task):
    cfg, ss, grid, K_cv, pstar = task
    s_data, s_cv = ss.spawn(2)
    X, truth = simulate_panel(cfg, s_data)
    try:
        report, _ = ada_wpca(X, grid, cfg.r, K_cv=K_cv, pstar=pstar, seed=_cv_seed(s_cv))
        errs = np.array([projector_distance(wpca(X, w, cfg.r).Uhat, truth.U) for w in grid])
    except NumericalError as exc:
        return str(exc)
    chosen = report.chosen_index
    # Rank 1 is the candidate whose full-panel fit is closest to the truth.
    rank = 1 + int(np.sum(errs < errs[chosen]))
    return rank, chosen


def run_cv_study(
    configs: Iterable[DgpConfig],
    reps: int = 100,
    seed: int = 0,
    grid: WeightGrid | None = None,
    K_cv: int = DEFAULT_KCV,
    pstar: float = DEFAULT_PSTAR,
    n_jobs: int = 1,
) -> StudyResult:
    """How well CV-selected weights rank by true subspace error.

    Each candidate's full-panel fit is ranked by its Frobenius error of
    ``Uhat``; reports the share of replicates whose chosen candidate ranks
    in the top three (``top3``) and outside the bottom three
    (``non_bottom3``), plus the mean rank.
    """
    if reps < 1:
        raise ParameterError("reps must be at least 1")
    grid = grid or default_grid()
    M = len(grid)
    rows, raw = [], {}
    for c, cfg in enumerate(configs):
        tasks = [(cfg, replicate_seed(seed, c, k), grid, K_cv, pstar) for k in range(reps)]
        results = _run_tasks(_cv_replicate, tasks, n_jobs)
        ok = [res for res in results if not isinstance(res, str)]
        fails = reps - len(ok)
        ranks = np.array([res[0] for res in ok])
        top3 = (ranks <= min(3, M)).astype(float)
        non_bottom3 = (ranks <= M - 3).astype(float) if M > 3 else np.ones(len(ranks))
        for metric, vals in (("top3", top3), ("non_bottom3", non_bottom3), ("mean_rank", ranks)):
            mean, sd = _summarize(vals)
            rows.append(StudyRow(cfg.N, cfg.T, cfg.label, "adawpca", metric, mean, sd, len(ok), fails))
        raw[c] = {"ranks": ranks.tolist(), "chosen": [res[1] for res in ok]}
    meta = {"study": "cv", "reps": reps, "seed": seed, "K_cv": K_cv, "pstar": pstar, "grid": grid.to_list()}
    return StudyResult(rows, meta, raw)


# ----------------------------------------------------------------- inference


@dataclass
class InferenceSample:
    """Standardized first-coordinate estimation errors over replicates."""

    values: np.ndarray
    target: str
    index: int
    method: str
    failures: int = 0
    mean: float = field(init=False)
    variance: float = field(init=False)
    ks_statistic: float = field(init=False)
    ks_pvalue: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        self.values = v
        self.mean = float(v.mean())
        self.variance = float(v.var(ddof=1)) if v.size > 1 else float("nan")
        ks = stats.kstest(v, "norm")
        self.ks_statistic = float(ks.statistic)
        self.ks_pvalue = float(ks.pvalue)

    def qq_points(self) -> np.ndarray:
        """``(theoretical, sample)`` quantile pairs, one row per observation."""
        n = self.values.size
        theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        return np.column_stack([theo, np.sort(self.values)])

    def histogram(self, bins: int = 30) -> tuple[np.ndarray, np.ndarray]:
        """Density-normalized histogram ``(counts, edges)``."""
        return np.histogram(self.values, bins=bins, density=True)

    def summary(self) -> dict:
        return {
            "target": self.target,
            "index": self.index,
            "method": self.method,
            "replicates": int(self.values.size),
            "failures": self.failures,
            "mean": self.mean,
            "variance": self.variance,
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
        }

    def to_csv(self, path=None) -> str:
        text = "replicate,value\n" + "".join(f"{k},{v!r}\n" for k, v in enumerate(self.values.tolist()))
        if path is not None:
            Path(path).write_text(text)
        return text


LAG1 = ToeplitzWeights(np.array([0.0, 1.0]))


def normalized_residual(fit, truth, w: ToeplitzWeights, target: str, index: int) -> np.ndarray:
    """Oracle-standardized estimation error of one loading or factor row."""
    rot = rotations(fit, truth)
    if target == "loading":
        err = fit.Lhat[index] - truth.L[index] @ rot.R_L
        S = oracle_sigma_L(truth, w, None, index, R_V=rot.R_V)
    elif target == "factor":
        err = fit.Fhat[index] - truth.F[index] @ rot.R_F
        S = oracle_sigma_F(truth, None, index, R_V=rot.R_V)
    else:
        raise ParameterError(f"target must be 'loading' or 'factor', got {target!r}")
    return inv_sqrt_psd(S) @ err


def _inference_replicate(task):
    cfg, ss, w, target, index = task
    X, truth = simulate_panel(cfg, ss)
    try:
        fit = wpca(X, w, cfg.r)
        return float(normalized_residual(fit, truth, w, target, index)[0])
    except NumericalError as exc:
        return str(exc)


def run_inference_study(
    cfg: DgpConfig,
    target: str = "loading",
    reps: int = 500,
    seed: int = 0,
    method: str = "wpca",
    weights: ToeplitzWeights | None = None,
    index: int | None = None,
    n_jobs: int = 1,
) -> InferenceSample:
    """Empirical distribution of a standardized loading or factor error.

    ``method='wpca'`` uses lag-1 weights unless ``weights`` is given;
    ``method='pca'`` uses the identity.  The row defaults to ``N/2`` (or
    ``T/2``) in one-based numbering.
    """
    if reps < 1:
        raise ParameterError("reps must be at least 1")
    if target not in ("loading", "factor"):
        raise ParameterError(f"target must be 'loading' or 'factor', got {target!r}")
    if method == "pca":
        w = ToeplitzWeights.identity()
    elif method == "wpca":
        w = weights or LAG1
    else:
        raise ParameterError(f"unknown method {method!r}")
    if index is None:
        index = (cfg.N if target == "loading" else cfg.T) // 2 - 1
    tasks = [(cfg, replicate_seed(seed, 0, k), w, target, index) for k in range(reps)]
    results = _run_tasks(_inference_replicate, tasks, n_jobs)
    vals = [v for v in results if not isinstance(v, str)]
    if not vals:
        raise NumericalError("every replicate failed")
    return InferenceSample(np.array(vals), target, index, method, failures=reps - len(vals))
