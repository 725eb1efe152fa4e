import math

import numpy as np
import pytest
from scipy.stats import norm

from copscreen.empirical import (
    KernelConfig,
    SortedSample,
    check_loss,
    column_quantiles,
    ecdf,
    equantile,
    kde_at_zero,
    nw_regress,
    pseudo_observations,
    psi,
    quantile_rank,
    silverman_bandwidth,
)
from copscreen.errors import DegenerateWindowError, InsufficientDataError


def s(v):
    return SortedSample.from_data(v)


@pytest.mark.parametrize("x,expected", [(2, 2 / 3), (0.5, 0.0), (3, 1.0), (10, 1.0)])
def test_ecdf(x, expected):
    assert ecdf(s([1, 2, 3]), x) == expected


def test_ecdf_single_point():
    assert ecdf(s([5]), 5) == 1.0


def test_sorted_sample_rejects_unsorted():
    with pytest.raises(ValueError):
        SortedSample(np.array([2.0, 1.0]))


def test_equantile_examples():
    assert equantile(s([10, 20, 30, 40]), 0.5) == 20
    assert equantile(s([7]), 0.3) == 7
    assert equantile(s([1, 2, 3, 4, 5]), 0.61) == 4


def test_equantile_is_inf_of_ecdf_set(rng):
    for _ in range(200):
        v = np.sort(rng.integers(0, 6, rng.integers(1, 15)).astype(float))
        t = rng.uniform(0.01, 0.99)
        q = equantile(s(v), t)
        ok = [x for x in v if ecdf(s(v), x) >= t]
        assert q == min(ok)


def test_quantile_rank_float_edge():
    # 0.7 * 10 is 7.000000000000001 in floating point; 7/10 >= 0.7 still holds
    assert quantile_rank(10, 0.7) == 7
    assert quantile_rank(3, 1 / 3) == 1
    with pytest.raises(ValueError):
        quantile_rank(5, 1.0)


def test_column_quantiles_match_equantile(rng):
    X = rng.normal(size=(17, 6))
    for t in (0.1, 0.5, 0.77):
        want = [equantile(s(np.sort(X[:, j])), t) for j in range(6)]
        assert np.array_equal(column_quantiles(X, t), want)


def test_psi_examples():
    assert psi(0.5, -1) == -0.5
    assert psi(0.5, 1) == 0.5
    assert psi(0.25, 0) == -0.75


def test_check_loss_nonnegative(rng):
    u = rng.normal(size=100)
    assert np.all(check_loss(0.3, u) >= 0)
    assert check_loss(0.3, 2.0) == pytest.approx(0.6)
    assert check_loss(0.3, -2.0) == pytest.approx(1.4)


def test_nw_constant_and_symmetry():
    cfg = KernelConfig(bandwidth=0.7)
    assert nw_regress([0, 1, 2, 5], [3, 3, 3, 3], 1.3, cfg) == pytest.approx(3.0)
    for h in (0.1, 1.0, 9.0):
        assert nw_regress([0, 1], [0, 1], 0.5, KernelConfig(bandwidth=h)) == pytest.approx(0.5)


def test_nw_three_point_weight_sum():
    # direct evaluation: phi(0) / (phi(0) + 2 phi(2))
    want = norm.pdf(0) / (norm.pdf(0) + 2 * norm.pdf(2))
    got = nw_regress([0, 1, 2], [0, 1, 0], 1.0, KernelConfig(bandwidth=0.5))
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(0.78699, abs=1e-5)


def test_nw_degenerate_window():
    with pytest.raises(DegenerateWindowError):
        nw_regress([0.0, 1.0], [0.0, 1.0], 1e6, KernelConfig(bandwidth=1e-3))


def test_kde_examples():
    cfg = KernelConfig(bandwidth=1.0)
    assert kde_at_zero([-1, 1], cfg) == pytest.approx(norm.pdf(1), abs=1e-4)
    assert kde_at_zero([0, 0, 0], cfg) == pytest.approx(0.3989, abs=1e-4)
    assert kde_at_zero([3, -3, 3, -3], cfg) == pytest.approx(0.00443, abs=1e-5)


def test_kde_small_n():
    with pytest.raises(InsufficientDataError):
        kde_at_zero([1.0])


def test_silverman_formula(rng):
    x = rng.normal(size=500)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    want = 1.06 * min(x.std(ddof=1), iqr / 1.34) * 500 ** -0.2
    assert silverman_bandwidth(x) == pytest.approx(want)
    with pytest.raises(DegenerateWindowError):
        silverman_bandwidth(np.ones(10))


def test_kernel_config_validation():
    with pytest.raises(ValueError):
        KernelConfig(bandwidth=-1.0)
    with pytest.raises(ValueError):
        KernelConfig(kernel="epanechnikov")


def test_pseudo_observations_ties():
    u = pseudo_observations(np.array([3.0, 1.0, 3.0, 2.0]))
    assert np.array_equal(u, [1.0, 0.25, 1.0, 0.5])
    M = np.column_stack([[3.0, 1.0, 2.0], [0.0, 0.0, 1.0]])
    assert np.array_equal(pseudo_observations(M), [[1, 2 / 3], [1 / 3, 2 / 3], [2 / 3, 1]])


def test_kde_matches_gaussian_sum(rng):
    r = rng.normal(size=50)
    h = silverman_bandwidth(r)
    assert kde_at_zero(r) == pytest.approx(sum(math.exp(-v * v / (2 * h * h)) for v in r)
                                           / (50 * h * math.sqrt(2 * math.pi)))
