import numpy as np
import pytest

from copscreen import quantreg
from copscreen.empirical import SortedSample, check_loss, equantile
from copscreen.errors import InsufficientDataError, SingularDesignError
from oracles import lp_quantreg


def design(rng, n, q):
    return np.hstack([np.ones((n, 1)), rng.normal(size=(n, q - 1))])


@pytest.mark.parametrize("w", [0.1, 0.3, 0.5, 0.85])
def test_objective_matches_lp(rng, w):
    for _ in range(10):
        n, q = int(rng.integers(15, 80)), int(rng.integers(2, 6))
        Z = design(rng, n, q)
        y = Z @ rng.normal(size=q) + rng.standard_t(2, n)
        _, best = lp_quantreg(Z, y, w)
        f = quantreg.fit(Z, y, w)
        assert f.objective == pytest.approx(best, rel=1e-9, abs=1e-12)


def test_stored_fields_consistent(rng):
    Z = design(rng, 40, 3)
    y = rng.normal(size=40)
    f = quantreg.fit(Z, y, 0.4)
    assert np.array_equal(f.residuals, y - Z @ f.coefficients)
    assert f.objective == pytest.approx(check_loss(0.4, f.residuals).mean(), abs=1e-10)
    assert f.converged


def test_intercept_only_is_median(rng):
    y = rng.normal(size=31)
    f = quantreg.fit(np.ones((31, 1)), y, 0.5)
    assert f.coefficients[0] == np.median(y)


def test_intercept_only_grid_minimum():
    y = np.array([1.0, 2, 3, 4, 5])
    f = quantreg.fit(np.ones((5, 1)), y, 0.61)
    assert f.coefficients[0] == 4.0
    grid = np.linspace(0, 6, 6001)
    brute = min(check_loss(0.61, y - g).mean() for g in grid)
    assert f.objective == pytest.approx(brute, abs=1e-12)


def test_intercept_only_tracks_equantile(rng):
    for _ in range(20):
        y = rng.normal(size=int(rng.integers(1, 50)) + 1)
        for w in (0.05, 0.33, 0.5, 0.9):
            got = quantreg.fit(np.ones((y.size, 1)), y, w).coefficients[0]
            assert abs(got - equantile(SortedSample.from_data(y), w)) <= 1e-6


def test_exact_interpolation(rng):
    Z = design(rng, 30, 4)
    beta = np.array([1.0, -2.0, 0.5, 3.0])
    for w in (0.2, 0.5, 0.8):
        f = quantreg.fit(Z, Z @ beta, w)
        assert np.allclose(f.coefficients, beta, atol=1e-8)


def test_score_condition(rng):
    n, q = 4000, 3
    Z = design(rng, n, q)
    y = Z @ [0.5, 1.0, -1.0] + rng.standard_cauchy(n)
    for w in (0.25, 0.5, 0.75):
        f = quantreg.fit(Z, y, w)
        score = Z.T @ (w - (f.residuals < 0)) / n
        assert np.max(np.abs(score)) <= 1e-3


def test_fit_many_matches_fit(rng):
    Z = design(rng, 50, 3)
    Y = rng.normal(size=(6, 50))
    batch = quantreg.fit_many(Z, Y, 0.3)
    for b in range(6):
        single = quantreg.fit(Z, Y[b], 0.3)
        assert batch[b].objective == pytest.approx(single.objective, abs=1e-12)
    Zs = np.stack([design(rng, 50, 3) for _ in range(4)])
    y = rng.normal(size=50)
    batch = quantreg.fit_many(Zs, y, 0.7)
    assert len(batch) == 4
    for b in range(4):
        assert batch[b].objective == pytest.approx(lp_quantreg(Zs[b], y, 0.7)[1], rel=1e-9)


def test_rank_deficient_design(rng):
    Z = design(rng, 40, 2)
    Z = np.hstack([Z, Z[:, 1:2]])
    y = rng.normal(size=40)
    f = quantreg.fit(Z, y, 0.5)
    assert f.ridge_used
    assert f.objective == pytest.approx(lp_quantreg(Z, y, 0.5)[1], rel=1e-6)
    with pytest.raises(SingularDesignError):
        quantreg.fit(Z, y, 0.5, ridge_fallback=False)


def test_input_validation(rng):
    with pytest.raises(InsufficientDataError):
        quantreg.fit(design(rng, 3, 3), np.zeros(3), 0.5)
    with pytest.raises(ValueError):
        quantreg.fit(design(rng, 10, 2), np.zeros(10), 1.0)
    with pytest.raises(ValueError):
        quantreg.fit_many(design(rng, 10, 2), np.zeros((2, 9)), 0.5)


def test_ties_and_discrete_response(rng):
    Z = design(rng, 60, 3)
    y = rng.integers(0, 3, 60).astype(float)
    for w in (0.3, 0.5):
        assert quantreg.fit(Z, y, w).objective == pytest.approx(lp_quantreg(Z, y, w)[1],
                                                                rel=1e-9, abs=1e-12)
