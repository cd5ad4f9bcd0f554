import json

import numpy as np
import pytest

from wpca.exceptions import ParameterError
from wpca.simulate.dgp import DgpConfig, NoiseSpec, diagonal_setting, equicorr_setting, simulate_panel
from wpca.simulate.studies import (
    InferenceSample,
    default_grid,
    normalized_residual,
    replicate_seed,
    run_cv_study,
    run_estimation_study,
    run_inference_study,
)
from wpca.estimators import wpca
from wpca.weights import ToeplitzWeights, grid_from_gammas

SMALL = dict(reps=4, K_cv=2)


def test_default_grid_is_lag01_ninths():
    g = default_grid()
    assert len(g) == 10 and g[0].gamma.tolist() == [1.0, 0.0]


def test_zero_noise_errors_vanish():
    cfg = DgpConfig(20, 40, noise=NoiseSpec("zero"), label="zero")
    res = run_estimation_study([cfg], seed=1, **SMALL)
    assert len(res.rows) == 6
    for row in res.rows:
        assert row.failures == 0 and row.replicates == 4
        # HeteroPCA's diagonal imputation converges linearly and stops after
        # 20 sweeps by default, so it is only near-exact on noiseless data.
        assert row.mean <= (1e-3 if row.method == "heteropca" else 1e-7), row


def test_estimation_deterministic_and_parallel_invariant():
    cfgs = [equicorr_setting(20, 40), diagonal_setting(20, 40)]
    a = run_estimation_study(cfgs, seed=3, **SMALL)
    b = run_estimation_study(cfgs, seed=3, **SMALL)
    c = run_estimation_study(cfgs, seed=3, n_jobs=2, **SMALL)
    assert a.to_csv() == b.to_csv() == c.to_csv()
    assert a.to_csv() != run_estimation_study(cfgs, seed=4, **SMALL).to_csv()


def test_estimation_rows_match_manual_replicates():
    cfg = diagonal_setting(20, 40)
    res = run_estimation_study([cfg], seed=5, methods=("pca",), reps=3, K_cv=2)
    from wpca.alignment import projector_distance
    from wpca.estimators import pca

    vals = []
    for k in range(3):
        X, truth = simulate_panel(cfg, replicate_seed(5, 0, k).spawn(2)[0])
        vals.append(projector_distance(pca(X, 3).Uhat, truth.U))
    row = res.get(20, 40, "pca", "u_fro")
    assert row.mean == pytest.approx(np.mean(vals), rel=1e-12)
    assert row.sd == pytest.approx(np.std(vals, ddof=1), rel=1e-12)
    assert row.sd >= 0


def test_estimation_csv_and_json(tmp_path):
    res = run_estimation_study([diagonal_setting(15, 30)], seed=0, **SMALL)
    text = res.to_csv(tmp_path / "e.csv")
    assert text.splitlines()[0] == "N,T,setting,method,metric,mean,sd,replicates,failures"
    assert len(text.splitlines()) == 7
    assert json.loads(res.to_json())["meta"]["reps"] == 4


def test_cv_singleton_grid_is_top3():
    res = run_cv_study([diagonal_setting(20, 40)], grid=grid_from_gammas([[0.0, 1.0]]), seed=0, **SMALL)
    assert res.get(20, 40, "adawpca", "top3").mean == 1.0
    assert res.get(20, 40, "adawpca", "non_bottom3").mean == 1.0


def test_cv_study_deterministic():
    cfgs = [equicorr_setting(20, 40)]
    a = run_cv_study(cfgs, seed=2, **SMALL)
    assert a.to_csv() == run_cv_study(cfgs, seed=2, n_jobs=2, **SMALL).to_csv()
    ranks = a.raw[0]["ranks"]
    assert all(1 <= r <= 10 for r in ranks)
    assert a.get(20, 40, "adawpca", "top3").mean == np.mean(np.array(ranks) <= 3)


def test_zero_replicates_rejected():
    with pytest.raises(ParameterError):
        run_inference_study(equicorr_setting(20, 20), reps=0)
    with pytest.raises(ParameterError):
        run_estimation_study([equicorr_setting(20, 20)], reps=0)
    with pytest.raises(ParameterError):
        run_inference_study(equicorr_setting(20, 20), target="noise", reps=2)


def test_inference_sample_outputs(tmp_path):
    s = run_inference_study(equicorr_setting(40, 40), reps=30, seed=1)
    assert s.index == 19 and s.values.size + s.failures == 30
    assert np.all(np.isfinite(s.values)) and 0 <= s.ks_statistic <= 1
    qq = s.qq_points()
    assert qq.shape == (s.values.size, 2) and np.all(np.diff(qq[:, 1]) >= 0)
    counts, edges = s.histogram(10)
    assert np.sum(counts * np.diff(edges)) == pytest.approx(1.0)
    assert s.to_csv(tmp_path / "s.csv").startswith("replicate,value\n")
    fac = run_inference_study(equicorr_setting(40, 40), target="factor", reps=5, seed=1)
    assert fac.index == 19


def test_inference_deterministic():
    cfg = diagonal_setting(30, 30)
    a = run_inference_study(cfg, reps=6, seed=9)
    b = run_inference_study(cfg, reps=6, seed=9, n_jobs=2)
    assert np.array_equal(a.values, b.values)


def test_ks_statistic_matches_definition():
    v = np.array([-1.0, 0.2, 0.5, 1.5])
    from scipy.stats import norm

    s = InferenceSample(v, "loading", 0, "wpca")
    x = np.sort(v)
    n = len(x)
    cdf = norm.cdf(x)
    d = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert s.ks_statistic == pytest.approx(d, abs=1e-12)


def test_normalized_residual_variance_band():
    # Each coordinate of the standardized WPCA loading error has variance
    # within 1 +- 5/sqrt(R) in the normality-study setting (N = T = 200).
    cfg = equicorr_setting(200, 200)
    w = ToeplitzWeights.lag(1)
    R = 300
    vals = []
    for k in range(R):
        X, truth = simulate_panel(cfg, replicate_seed(11, 0, k))
        vals.append(normalized_residual(wpca(X, w, 3), truth, w, "loading", 99))
    var = np.var(np.array(vals), axis=0, ddof=1)
    band = 5 / np.sqrt(R)
    assert np.all(np.abs(var - 1) <= band), var
