import numpy as np
import pytest

import kanchor.evaluation as ev
from kanchor.data import ColumnSchema, load_csv
from kanchor.evaluation import (
    ConditionalReference,
    TrialConfig,
    TrialReport,
    default_grid,
    gamma_sweep,
    grid_mse,
    group_shift_eval,
    make_estimator,
    prediction_error,
    run_benchmark,
    shift_eval,
    summarize,
    with_n,
)
from kanchor.exceptions import InvalidInputError
from kanchor.sem import generate, true_do


def test_grid_mse_of_truth_is_zero():
    assert grid_mse(lambda x: true_do("main", x), "main") == 0.0


def test_grid_mse_zero_predictor():
    grid = default_grid()
    assert grid.size == 100 and grid[0] == 0.05 and grid[-1] == 0.95
    expected = sum(true_do("main", g) ** 2 for g in grid) / 100
    assert grid_mse(lambda x: np.zeros_like(x), "main") == pytest.approx(expected, rel=1e-12)


def test_grid_mse_rejects_grid_outside_unit_interval():
    with pytest.raises(InvalidInputError):
        grid_mse(lambda x: x, "main", [0.5, 1.5])


def test_summarize_quartiles():
    s = summarize([1.0, 10.0, 100.0, 0.0, -1.0])
    assert s == {"median": 1.0, "q1": 0.5, "q3": 1.5, "n": 3}
    assert summarize([])["n"] == 0


def test_config_validation():
    with pytest.raises(InvalidInputError):
        TrialConfig(methods=("kar", "lasso"))
    with pytest.raises(InvalidInputError):
        TrialConfig(n=600)
    with pytest.raises(InvalidInputError):
        TrialConfig(trials=0)
    with pytest.raises(InvalidInputError):
        TrialConfig(design="other")


def test_with_n_scales_splits():
    c = with_n(TrialConfig(), 2)
    assert c.n == 1400 and c.split3 == (500, 500, 400) and c.split2 == (1000, 400)


def test_make_estimator_scales_splits():
    est = make_estimator("kar", 350, 0)
    assert est.split == (125, 125, 100)
    assert make_estimator("kiv", 700, 0).split == (500, 200)
    with pytest.raises(InvalidInputError):
        make_estimator("lasso", 700, 0)


def test_kreg_and_kar_gamma_one_equal():
    r = run_benchmark(TrialConfig(methods=("kreg", "kar"), gamma=1.0, trials=1))
    assert r.values("kreg")[0] == pytest.approx(r.values("kar")[0], abs=1e-10)


def test_benchmark_deterministic():
    cfg = TrialConfig(methods=("kar", "ar"), trials=2, base_seed=11)
    a, b = run_benchmark(cfg), run_benchmark(cfg)
    assert a.records == b.records and a.curves == b.curves
    assert len(a.curves) == 100 and set(a.curves[0]) == {"x", "truth", "kar", "ar"}


def test_trial_seed_is_base_plus_index():
    a = run_benchmark(TrialConfig(methods=("kar", "ols"), trials=3, base_seed=0))
    b = run_benchmark(TrialConfig(methods=("kar", "ols"), trials=2, base_seed=1))
    for m in ("kar", "ols"):
        assert a.by_trial(m)[1] == b.by_trial(m)[0]
        assert a.by_trial(m)[2] == b.by_trial(m)[1]


def test_parallel_matches_serial():
    cfg = TrialConfig(methods=("kar",), trials=3)
    from dataclasses import replace

    assert run_benchmark(cfg).records == run_benchmark(replace(cfg, jobs=2)).records


def test_failures_recorded_and_threshold(monkeypatch):
    real = ev._fit_predict

    def flaky(method, train, x, seed, **kw):
        if method == "pa" and seed % 2 == 0:
            raise np.linalg.LinAlgError("boom")
        return real(method, train, x, seed, **kw)

    monkeypatch.setattr(ev, "_fit_predict", flaky)
    r = run_benchmark(TrialConfig(methods=("pa", "ols"), trials=4))
    assert r.failures == {"pa": 2}
    assert len(r.values("pa")) == 2 and len(r.values("ols")) == 4
    assert r.summary()["pa"]["failures"] == 2
    assert r.failed


def test_failure_rate_boundary():
    r = TrialReport("mse", {}, n_trials=10, failures={"a": 1})
    assert not r.failed
    r.failures["a"] = 2
    assert r.failed


def test_gamma_sweep_single_gamma_equals_benchmark():
    cfg = TrialConfig(methods=("kar",), gamma=1.0, trials=2)
    sweep = gamma_sweep(cfg, [1.0], alpha_consts=(0.5, 1.5), methods=("kar",), include_kiv=False)
    bench = run_benchmark(cfg)
    np.testing.assert_allclose(sweep.values("kar[gamma=1]"), bench.values("kar"), atol=1e-10)


def test_gamma_sweep_labels_and_selection():
    cfg = TrialConfig(trials=2)
    r = gamma_sweep(cfg, [0.0, 2.0], alpha_consts=(0.1, 1.5))
    assert r.labels == ["kar[gamma=0]", "kar[gamma=2]", "kar2[gamma=0]", "kar2[gamma=2]", "kiv"]
    assert set(r.config["selected_alpha_const"].values()) <= {0.1, 1.5}
    with pytest.raises(InvalidInputError):
        gamma_sweep(cfg, [])


def test_prediction_error():
    assert prediction_error([1.0, 2.0], [1.0, 4.0]) == 2.0


@pytest.fixture(scope="module")
def reference_above():
    return ConditionalReference("main", 0.0, True)


def test_reference_matches_binned_conditional_mean(reference_above):
    big = generate("main", 3_000_000, 77)
    keep = big.z[:, 0] >= 0
    x, y = big.x[keep, 0], big.y[keep]
    centers = np.linspace(0.15, 0.85, 15)
    binned = np.array([y[np.abs(x - c) < 0.005].mean() for c in centers])
    # the median-bandwidth smoother rounds off the kink at 0.5, costing a few 1e-3
    assert prediction_error(reference_above(centers), binned) < 5e-3
    far = np.abs(centers - 0.5) > 0.2
    assert np.max(np.abs(reference_above(centers[far]) - binned[far])) < 0.06


def test_reference_against_itself_is_zero(reference_above):
    x = np.linspace(0, 1, 50)
    assert prediction_error(reference_above(x), reference_above(x)) == 0.0


def test_shift_empty_subpopulation():
    with pytest.raises(InvalidInputError):
        shift_eval(TrialConfig(methods=("ols",), trials=1), threshold=5.0)


def test_shift_report_shape():
    r = shift_eval(TrialConfig(methods=("kar", "ar"), trials=2), 0.0)
    assert r.metric == "pe"
    assert r.labels == ["kar@train_below", "ar@train_below", "kar@train_above", "ar@train_above"]
    assert all(len(r.values(l)) == 2 for l in r.labels)


def test_group_shift_fixture(nmes_csv, nmes_schema):
    data = load_csv(nmes_csv, ColumnSchema.from_json(nmes_schema))
    cfg = TrialConfig(methods=("ols", "ar"), n=10, split3=(4, 3, 3), split2=(7, 3), trials=3)
    fixed = group_shift_eval(data, "1", cfg, subsample_size=12, fixed_subsample=True)
    redraw = group_shift_eval(data, "1", cfg, subsample_size=12, fixed_subsample=False)
    v = fixed.values("ols")
    assert np.all(v == v[0])
    assert len(set(redraw.values("ols"))) > 1
    with pytest.raises(InvalidInputError):
        group_shift_eval(data, "7", cfg, subsample_size=None)
