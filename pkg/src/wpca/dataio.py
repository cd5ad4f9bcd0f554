"""CSV panel ingestion, missing-value preprocessing and masked reconstruction.

Two CSV layouts are supported.  In ``time_rows`` the header lists variable
names after a leading label cell and each following row is one time point.
In ``unit_rows`` the header lists time labels and each row is one unit.
Values are never transformed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .adacv import DEFAULT_KCV, DEFAULT_PSTAR, ada_wpca, draw_mask
from .estimators import Panel, as_array, hetero_pca_fit, pca
from .exceptions import EmptyDataError, NumericalError, ParameterError, ParseError, ValidationError
from .weights import WeightGrid, build_grid

log = logging.getLogger(__name__)

LAYOUTS = ("time_rows", "unit_rows")
DEFAULT_SENTINELS = ("", "NA")
# Rows whose label starts with one of these are metadata, not observations
# (FRED-MD ships a row of transformation codes right after the header).
METADATA_PREFIXES = ("transform",)


@dataclass
class PanelSource:
    """Raw table as read from disk, before balancing.

    ``values`` holds NaN exactly where ``missing`` is True.
    """

    values: np.ndarray
    missing: np.ndarray
    row_labels: list[str]
    col_labels: list[str]
    layout: str = "time_rows"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ParameterError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.missing, dtype=bool)
        if v.ndim != 2 or v.shape != m.shape:
            raise ValidationError("values and missing flags must be 2-D arrays of equal shape")
        if len(self.row_labels) != v.shape[0] or len(self.col_labels) != v.shape[1]:
            raise ValidationError("label counts do not match the table dimensions")
        if not np.array_equal(np.isnan(v), m):
            raise ValidationError("missing flags disagree with NaN entries")
        self.values, self.missing = v, m

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def unit_major(self) -> tuple[np.ndarray, np.ndarray, list[str], list[str]]:
        """``(values, missing, unit_labels, time_labels)`` with units in rows."""
        if self.layout == "time_rows":
            return self.values.T, self.missing.T, list(self.col_labels), list(self.row_labels)
        return self.values, self.missing, list(self.row_labels), list(self.col_labels)


def _parse_cell(text: str, sentinels, row: int, col: int) -> float:
    s = text.strip()
    if s in sentinels:
        return math.nan
    try:
        val = float(s)
    except ValueError:
        raise ParseError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None
    if math.isnan(val):
        return math.nan
    if not math.isfinite(val):
        raise ParseError(f"row {row}, column {col}: non-finite value {text!r}")
    return val


def read_panel_csv(
    path,
    layout: str = "time_rows",
    sentinels: Sequence[str] = DEFAULT_SENTINELS,
    metadata_prefixes: Sequence[str] = METADATA_PREFIXES,
) -> PanelSource:
    """Read a labelled numeric table.

    Empty cells and any token in ``sentinels`` become missing.  Row and
    column numbers in parse errors are one-based file coordinates.
    """
    if layout not in LAYOUTS:
        raise ParameterError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    sent = {s.strip() for s in sentinels}
    prefixes = tuple(p.lower() for p in metadata_prefixes)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise EmptyDataError(f"{path} is empty")
    header = rows[0]
    if len(header) < 2:
        raise ParseError(f"{path}: header must have a label column and at least one data column")
    ncol = len(header) - 1
    labels, data, meta = [], [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        label = row[0].strip()
        if prefixes and label.lower().startswith(prefixes):
            meta[label] = row[1:]
            continue
        if len(row) - 1 != ncol:
            raise ParseError(f"row {lineno}: expected {ncol} values, found {len(row) - 1}")
        data.append([_parse_cell(c, sent, lineno, j) for j, c in enumerate(row[1:], start=2)])
        labels.append(label)
    if not data:
        raise EmptyDataError(f"{path} has a header but no data rows")
    values = np.array(data, dtype=float)
    return PanelSource(values, np.isnan(values), labels, [h.strip() for h in header[1:]], layout, meta)


def write_panel_csv(src: PanelSource, path, na_token: str = "", corner: str = "label") -> Path:
    """Write ``src`` in its own layout; floats use ``repr`` so reading back is exact."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([corner, *src.col_labels])
        for label, vals, miss in zip(src.row_labels, src.values, src.missing):
            w.writerow([label, *(na_token if m else repr(float(v)) for v, m in zip(vals, miss))])
    return path


def preprocess_panel(src: PanelSource, max_missing_frac: float = 0.05) -> Panel:
    """Balance a raw table into an ``N x T`` panel.

    Drops variables whose missing fraction exceeds ``max_missing_frac``,
    then keeps only the time points with no missing value among the
    surviving variables.
    """
    if not 0 <= max_missing_frac < 1:
        raise ParameterError(f"max_missing_frac must lie in [0, 1), got {max_missing_frac}")
    vals, miss, units, times = src.unit_major()
    keep_units = miss.mean(axis=1) <= max_missing_frac
    vals, miss = vals[keep_units], miss[keep_units]
    keep_times = ~miss.any(axis=0)
    X = vals[:, keep_times]
    if X.size == 0:
        raise EmptyDataError("no complete observations remain after preprocessing")
    units = [u for u, k in zip(units, keep_units) if k]
    times = [t for t, k in zip(times, keep_times) if k]
    log.info("preprocessed panel: N=%d, T=%d", *X.shape)
    return Panel(np.ascontiguousarray(X), units, times)


def panel_to_source(panel: Panel) -> PanelSource:
    """A complete ``Panel`` as a ``time_rows`` table."""
    X = as_array(panel)
    N, T = X.shape
    units = panel.unit_labels if isinstance(panel, Panel) and panel.unit_labels else [f"x{i + 1}" for i in range(N)]
    times = panel.time_labels if isinstance(panel, Panel) and panel.time_labels else [str(t + 1) for t in range(T)]
    return PanelSource(X.T.copy(), np.zeros((T, N), bool), list(times), list(units), "time_rows")


def relative_holdout_error(X: np.ndarray, C: np.ndarray | None, holdout: np.ndarray) -> float:
    """``sum_hold (X - C)^2 / sum_hold X^2``; ``C=None`` is the zero fit."""
    x = X[holdout]
    denom = float(x @ x)
    if denom == 0.0:
        raise NumericalError("held-out entries have zero energy")
    resid = x if C is None else x - C[holdout]
    return float(resid @ resid) / denom


@dataclass
class ReconstructionResult:
    method: str
    r: int
    qtr: float
    mean_error: float
    errors: list[float]
    reps: int
    excluded: int = 0
    chosen_gammas: list[list[float]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "r": self.r,
            "qtr": self.qtr,
            "mean_error": self.mean_error,
            "reps": self.reps,
            "excluded": self.excluded,
        }

    def to_json(self, **kw) -> str:
        d = self.summary()
        d["errors"] = self.errors
        if self.chosen_gammas:
            d["chosen_gammas"] = self.chosen_gammas
        return json.dumps(d, **kw)


def reconstruction_eval(
    X,
    qtr: float,
    method: str,
    r: int,
    reps: int = 100,
    seed: int = 0,
    grid: WeightGrid | None = None,
    K_cv: int = DEFAULT_KCV,
    pstar: float = DEFAULT_PSTAR,
) -> ReconstructionResult:
    """Masked reconstruction error of a factor fit on a real panel.

    Rep ``k`` draws a Bernoulli(``qtr``) training mask from
    ``SeedSequence([seed, k])``, fits ``method`` to ``qtr^{-1}`` times the
    masked panel and scores the fitted common component on the hidden
    entries.  ``adawpca`` selects its weights by cross-validation on the
    rescaled training panel over ``grid`` (default: lag 0/1 blends with
    step 1/9).
    """
    X = as_array(X)
    if not 0 < qtr < 1:
        raise ParameterError(f"qtr must lie in (0, 1), got {qtr}")
    if reps < 1:
        raise ParameterError("reps must be at least 1")
    if method not in ("adawpca", "pca", "heteropca"):
        raise ParameterError(f"unknown method {method!r}")
    grid = grid or build_grid(1, 1.0 / 9.0)
    N, T = X.shape
    errors, gammas = [], []
    excluded = 0
    for k in range(reps):
        ss = np.random.SeedSequence([int(seed), k])
        s_mask, s_cv = ss.spawn(2)
        mask = draw_mask(N, T, qtr, np.random.default_rng(s_mask))
        hold = mask.holdout
        if not hold.any() or not np.any(X[hold]):
            excluded += 1
            continue
        Xtr = np.where(mask.omega, X, 0.0) / qtr
        try:
            if method == "adawpca":
                report, fit = ada_wpca(Xtr, grid, r, K_cv=K_cv, pstar=pstar, seed=int(s_cv.generate_state(1)[0]))
                gammas.append(report.chosen_weights.gamma.tolist())
            elif method == "pca":
                fit = pca(Xtr, r)
            else:
                fit = hetero_pca_fit(Xtr, r)
        except NumericalError as exc:
            log.warning("rep %d failed: %s", k, exc)
            excluded += 1
            continue
        errors.append(relative_holdout_error(X, fit.common_component(), hold))
    if not errors:
        raise NumericalError("every replicate was excluded")
    if excluded:
        warnings.warn(f"{excluded} of {reps} replicates excluded", RuntimeWarning, stacklevel=2)
    return ReconstructionResult(method, int(r), float(qtr), float(np.mean(errors)), errors, reps, excluded, gammas)
