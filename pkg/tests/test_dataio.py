import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import low_rank_panel
from wpca.dataio import (
    PanelSource,
    panel_to_source,
    preprocess_panel,
    read_panel_csv,
    reconstruction_eval,
    relative_holdout_error,
    write_panel_csv,
)
from wpca.estimators import Panel
from wpca.exceptions import EmptyDataError, ParameterError, ParseError, ValidationError


def _write(tmp_path, text, name="p.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestRead:
    def test_one_missing_cell(self, tmp_path):
        src = read_panel_csv(_write(tmp_path, "date,a,b\n1,1.5,2\n2,,3\n3,4,5\n"))
        assert src.shape == (3, 2) and src.missing.sum() == 1 and src.missing[1, 0]
        assert src.col_labels == ["a", "b"] and src.row_labels == ["1", "2", "3"]

    def test_sentinels(self, tmp_path):
        p = _write(tmp_path, "t,a\n1,NA\n2,-999\n3,1\n")
        assert read_panel_csv(p).missing.sum() == 1
        assert read_panel_csv(p, sentinels=("", "NA", "-999")).missing.sum() == 2

    def test_header_only(self, tmp_path):
        with pytest.raises(EmptyDataError):
            read_panel_csv(_write(tmp_path, "date,a,b\n"))

    def test_malformed_cell_location(self, tmp_path):
        with pytest.raises(ParseError, match="row 3, column 2"):
            read_panel_csv(_write(tmp_path, "t,a,b\n1,1,2\n2,x,3\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(ParseError, match="row 2"):
            read_panel_csv(_write(tmp_path, "t,a,b\n1,1\n"))

    def test_metadata_row_skipped(self, tmp_path):
        src = read_panel_csv(_write(tmp_path, "sasdate,a,b\nTransform:,5,2\n1/1/1959,1,2\n"))
        assert src.shape == (1, 2) and "Transform:" in src.metadata

    def test_unit_rows_layout(self, tmp_path):
        src = read_panel_csv(_write(tmp_path, "unit,t1,t2,t3\nx,1,2,3\ny,4,5,6\n"), layout="unit_rows")
        panel = preprocess_panel(src)
        assert panel.X.tolist() == [[1, 2, 3], [4, 5, 6]] and panel.unit_labels == ["x", "y"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            read_panel_csv(tmp_path / "none.csv")

    @given(st.integers(0, 10**6), st.floats(0, 0.5))
    def test_roundtrip_bitwise(self, seed, miss_rate):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        vals = rng.standard_normal((6, 4)) * 10.0 ** rng.integers(-5, 6, (6, 4))
        miss = rng.random((6, 4)) < miss_rate
        vals[miss] = np.nan
        src = PanelSource(vals, miss, [f"r{i}" for i in range(6)], list("abcd"))
        with tempfile.TemporaryDirectory() as d:
            back = read_panel_csv(write_panel_csv(src, Path(d) / "x.csv"))
        assert np.array_equal(back.missing, miss)
        assert np.array_equal(back.values[~miss], vals[~miss])


class TestPreprocess:
    def _src(self, vals):
        vals = np.asarray(vals, float)
        return PanelSource(vals, np.isnan(vals), [str(i) for i in range(vals.shape[0])],
                           [f"v{j}" for j in range(vals.shape[1])])

    def test_complete_passthrough_is_transpose(self, rng):
        v = rng.standard_normal((7, 3))
        panel = preprocess_panel(self._src(v))
        assert np.array_equal(panel.X, v.T) and panel.N == 3 and panel.T == 7

    def test_drops_sparse_variable_then_times(self, rng):
        v = rng.standard_normal((20, 3))
        v[:2, 0] = np.nan  # 10% missing, dropped
        v[5, 1] = np.nan  # 5% missing, kept; time 5 dropped
        panel = preprocess_panel(self._src(v), 0.05)
        assert panel.unit_labels == ["v1", "v2"] and panel.T == 19 and "5" not in panel.time_labels

    def test_idempotent(self, rng):
        v = rng.standard_normal((30, 5))
        v[rng.random(v.shape) < 0.04] = np.nan
        once = preprocess_panel(self._src(v), 0.05)
        twice = preprocess_panel(panel_to_source(once), 0.05)
        assert np.array_equal(once.X, twice.X) and once.unit_labels == twice.unit_labels

    def test_empty_result(self):
        with pytest.raises(EmptyDataError):
            preprocess_panel(self._src([[np.nan, 1.0], [1.0, np.nan]]), 0.5)

    def test_bad_threshold(self, rng):
        with pytest.raises(ParameterError):
            preprocess_panel(self._src(rng.standard_normal((3, 2))), 1.0)


class TestReconstruction:
    def test_exact_low_rank(self, rng):
        # The masked fit is a one-shot spectral estimate, so on exactly
        # low-rank data the error shrinks with the panel size rather than
        # vanishing; it is below 1e-3 once min(N, T) is in the hundreds.
        errs = []
        for N in (50, 200, 800):
            _, _, X = low_rank_panel(rng, N, 2 * N, 2)
            errs.append(reconstruction_eval(X, 0.9, "pca", 2, reps=1).mean_error)
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] <= 1e-3

    def test_adawpca_records_choices(self, rng):
        _, _, X = low_rank_panel(rng, 30, 60, 2)
        res = reconstruction_eval(X, 0.9, "adawpca", 2, reps=3, K_cv=2)
        assert len(res.chosen_gammas) == 3 and res.mean_error < 0.1

    def test_zero_fit_ratio_is_one(self, rng):
        X = rng.standard_normal((5, 6))
        hold = rng.random((5, 6)) < 0.5
        assert relative_holdout_error(X, None, hold) == 1.0
        assert relative_holdout_error(X, np.zeros_like(X), hold) == 1.0

    @pytest.mark.parametrize("method", ["adawpca", "pca", "heteropca"])
    def test_scale_invariance(self, rng, method):
        X = low_rank_panel(rng, 20, 40, 1, noise=3.0)[2]
        a = reconstruction_eval(X, 0.7, method, 1, reps=2, seed=4, K_cv=2)
        b = reconstruction_eval(7.5 * X, 0.7, method, 1, reps=2, seed=4, K_cv=2)
        assert a.mean_error == pytest.approx(b.mean_error, abs=1e-12)

    def test_summary_and_errors(self, rng):
        X = rng.standard_normal((8, 20))
        res = reconstruction_eval(X, 0.8, "pca", 1, reps=2)
        assert set(res.summary()) >= {"method", "r", "qtr", "mean_error", "reps"}
        with pytest.raises(ParameterError):
            reconstruction_eval(X, 1.0, "pca", 1)
        with pytest.raises(ParameterError):
            reconstruction_eval(X, 0.5, "svd", 1)
        with pytest.raises(ParameterError):
            reconstruction_eval(X, 0.5, "pca", 1, reps=0)

    def test_accepts_panel(self, rng):
        X = rng.standard_normal((8, 20))
        a = reconstruction_eval(Panel(X), 0.8, "pca", 1, reps=2)
        assert a.mean_error == reconstruction_eval(X, 0.8, "pca", 1, reps=2).mean_error
