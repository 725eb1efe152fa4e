import math

import numpy as np
import pytest
from scipy.stats import norm

from copscreen.cc import QuantilePair, cc_columns
from copscreen.errors import DesignTooLargeError
from copscreen.screening import (
    ScreeningConfig,
    baseline_screeners,
    cc_sis,
    confounder_sets,
    cpc_sis_case1,
    cpc_sis_case2,
    cpc_sis_case3,
    default_dn,
    default_dstar,
    fdr_delta,
    fdr_threshold,
    kendall_utilities,
    minimum_model_size,
    rank_desc,
    screen,
)
from copscreen.simbench import SimulationSpec, generate
from oracles import brute_kendall


def test_config_validation():
    with pytest.raises(ValueError):
        ScreeningConfig(d_n=0)
    with pytest.raises(ValueError):
        ScreeningConfig(ell=-1)
    with pytest.raises(ValueError):
        ScreeningConfig(threshold_mode="fdr", d_bar=0.5)
    with pytest.raises(ValueError):
        ScreeningConfig(threshold_mode="absolute")
    with pytest.raises(ValueError):
        ScreeningConfig(case_mode="lasso")


def test_defaults():
    assert default_dn(200) == 37
    assert default_dstar(200) == 12


def test_rank_ties_lowest_index_first():
    assert list(rank_desc([0.1, 0.5, 0.5, 0.2, 0.5])) == [1, 2, 4, 3, 0]


def test_top_dn_size_and_order(rng):
    y = rng.normal(size=80)
    X = rng.normal(size=(80, 30))
    res = cc_sis(y, X, ScreeningConfig(d_n=7))
    assert res.selected.size == 7
    assert np.array_equal(res.selected, res.ranking[:7])
    assert np.all(np.diff(res.utilities[res.ranking]) <= 0)
    assert np.allclose(res.utilities, np.abs(cc_columns(y, X, QuantilePair())))


def test_single_covariate(rng):
    y = rng.normal(size=40)
    res = cc_sis(y, rng.normal(size=(40, 1)), ScreeningConfig(d_n=1))
    assert list(res.selected) == [0]
    res = cpc_sis_case2(y, rng.normal(size=(40, 1)), rng.normal(size=(40, 2)), ScreeningConfig(d_n=1))
    assert list(res.selected) == [0]


def test_monotone_invariance(rng):
    y = rng.normal(size=100)
    X = rng.normal(size=(100, 50))
    base = cc_sis(y, X).ranking
    assert np.array_equal(cc_sis(np.exp(y), X ** 3).ranking, base)


def test_fdr_delta():
    assert fdr_delta(1000, 10) == pytest.approx(2.5758, abs=1e-4)
    assert fdr_delta(1000, 10) == pytest.approx(norm.ppf(0.995))


def test_fdr_all_zero_selects_nothing():
    assert fdr_threshold(np.zeros(50), np.ones(50), 200, 50, 5).size == 0


def test_fdr_mode_runs(rng):
    y = rng.normal(size=200)
    X = rng.normal(size=(200, 40))
    X[:, 3] += y
    res = cc_sis(y, X, ScreeningConfig(threshold_mode="fdr", d_bar=2))
    assert 3 in res.selected
    assert res.z_stats is not None and res.z_stats.shape == (40,)


def test_absolute_mode(rng):
    y = rng.normal(size=100)
    X = rng.normal(size=(100, 20))
    res = cc_sis(y, X, ScreeningConfig(threshold_mode="absolute", nu=0.15))
    assert np.all(res.utilities[res.selected] >= 0.15)
    assert set(res.selected) == set(np.flatnonzero(res.utilities >= 0.15))


def test_case2_empty_w_reduces_to_cc(rng):
    y = rng.normal(size=120)
    X = rng.normal(size=(120, 25))
    X[:, :3] += y[:, None]
    a = cc_sis(y, X)
    b = cpc_sis_case2(y, X, None)
    assert np.array_equal(a.ranking, b.ranking)
    assert np.allclose(a.utilities, b.utilities, atol=1e-14)


def test_case2_removes_confounder(rng):
    data = generate(SimulationSpec("ex5", n=200, p=100, rho=0.5), 0)
    res = cpc_sis_case2(data.y, data.X, data.W)
    assert max(res.rank_of(j) for j in data.active) <= 10


def test_confounder_sets_exclude_self(rng):
    X = rng.normal(size=(60, 8))
    X[:, 1] = X[:, 0] + 0.01 * rng.normal(size=60)
    sets = confounder_sets(X, QuantilePair(), 3)
    assert all(j not in s and len(s) == 3 for j, s in enumerate(sets))
    assert sets[0][0] == 1 and sets[1][0] == 0
    assert confounder_sets(X, QuantilePair(), 0) == [()] * 8


@pytest.mark.slow
def test_case1_picks_signal_first(rng):
    hits = 0
    reps = 10
    for _ in range(reps):
        X = rng.normal(size=(400, 40))
        y = 2 * X[:, 0] + rng.normal(size=400)
        res = cpc_sis_case1(y, X, ScreeningConfig(ell=1))
        hits += res.per_step_log[0].chosen_index == 0
    assert hits >= 0.95 * reps


def test_case3_without_w_equals_case1(rng):
    X = rng.normal(size=(60, 12))
    y = X[:, 0] - X[:, 1] + rng.normal(size=60)
    a = cpc_sis_case1(y, X, ScreeningConfig(ell=2))
    b = cpc_sis_case3(y, X, None, ScreeningConfig(ell=2))
    assert np.array_equal(a.ranking, b.ranking)
    assert np.array_equal(a.utilities, b.utilities)
    assert [r.chosen_index for r in a.per_step_log] == [r.chosen_index for r in b.per_step_log]


def test_case3_smoke_two_covariates(rng):
    X = rng.normal(size=(60, 2))
    y = X.sum(axis=1) + rng.normal(size=60)
    res = cpc_sis_case3(y, X, rng.normal(size=(60, 1)), ScreeningConfig(d_n=2))
    assert sorted(res.selected) == [0, 1]


@pytest.mark.slow
def test_case3_true_confounders_unmask_x3(rng):
    hits = 0
    reps = 10
    for rep in range(reps):
        data = generate(SimulationSpec("ex5", n=200, p=200, rho=0.5, seed=11), rep)
        res = cpc_sis_case3(data.y, data.X, data.W)
        hits += 2 in [r.chosen_index for r in res.per_step_log[:4]]
    assert hits >= 0.9 * reps


def test_step_log_structure(rng):
    X = rng.normal(size=(80, 15))
    y = X[:, 2] + rng.normal(size=80)
    res = cpc_sis_case1(y, X, ScreeningConfig(d_n=5, ell=2))
    steps = default_dstar(80)
    assert [r.iteration for r in res.per_step_log] == list(range(1, steps + 1))
    assert list(res.ranking[:steps]) == [r.chosen_index for r in res.per_step_log]
    assert sorted(res.ranking) == list(range(15))
    for r in res.per_step_log:
        assert r.chosen_index not in r.conditional_set


def test_greedy_rejects_fdr_and_large_designs(rng):
    X = rng.normal(size=(40, 30))
    y = rng.normal(size=40)
    with pytest.raises(ValueError):
        cpc_sis_case1(y, X, ScreeningConfig(threshold_mode="fdr", d_bar=2))
    with pytest.raises(DesignTooLargeError):
        cpc_sis_case3(y, X, rng.normal(size=(40, 20)), ScreeningConfig(ell=20))


def test_baselines(rng):
    X = rng.normal(size=(100, 10))
    y = X[:, 0].copy()
    for m in ("pearson_sis", "kendall_sis"):
        assert baseline_screeners(y, X, m).ranking[0] == 0
    with pytest.raises(ValueError):
        baseline_screeners(y, X, "spearman")


def test_kendall_examples(rng):
    assert kendall_utilities([1.0, 2, 3], np.array([[3.0], [1], [2]]))[0] == pytest.approx(1 / 3)
    assert brute_kendall([1, 2, 3], [3, 1, 2]) == pytest.approx(-1 / 3)
    y = rng.normal(size=30)
    assert kendall_utilities(y, np.exp(y)[:, None])[0] == pytest.approx(1.0)
    X = rng.normal(size=(25, 4))
    assert np.allclose(kendall_utilities(y[:25], X), [abs(brute_kendall(y[:25], X[:, j])) for j in range(4)])


def test_minimum_model_size():
    assert minimum_model_size([4, 0, 2, 1, 3], [0, 1]) == 4
    assert minimum_model_size([0, 1, 2], [0, 1, 2]) == 3


def test_all_covariates_active(rng):
    X = rng.normal(size=(50, 3))
    y = X.sum(axis=1)
    res = screen(y, X, cfg=ScreeningConfig(d_n=3))
    assert minimum_model_size(res.ranking, [0, 1, 2]) == 3


def test_screen_dispatch(rng):
    X = rng.normal(size=(60, 6))
    y = X[:, 0] + rng.normal(size=60)
    W = rng.normal(size=(60, 1))
    expected = {"marginal_cc": "cc_sis", "cpc_case1": "cpc_sis_case1",
                "cpc_case2": "cpc_sis_case2", "cpc_case3": "cpc_sis_case3"}
    for mode, method in expected.items():
        res = screen(y, X, W, ScreeningConfig(case_mode=mode, ell=1))
        assert res.method == method
        assert sorted(res.ranking) == list(range(6))
        assert math.isfinite(res.threshold_used)
