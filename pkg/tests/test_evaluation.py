from types import SimpleNamespace

import numpy as np
import pytest

from copscreen.errors import InsufficientDataError
from copscreen.evaluation import prediction_error


def data(y, X):
    return SimpleNamespace(y=np.asarray(y, dtype=float), X=np.asarray(X, dtype=float))


def test_noise_free_linear(rng):
    X = rng.normal(size=(100, 5))
    y = 1.0 + X[:, [1, 3]] @ [2.0, -1.0]
    rep = prediction_error(data(y, X), [1, 3], partitions=20)
    assert rep.pe1_mean <= 1e-10 and rep.pe2_mean <= 1e-10


def test_empty_selection_is_centered_spread(rng):
    y = rng.normal(size=50)
    X = rng.normal(size=(50, 3))
    rep = prediction_error(data(y, X), [], partitions=5, seed=3)
    for b in range(5):
        perm = np.random.default_rng([3, b]).permutation(50)
        tr, te = perm[:40], perm[40:]
        med = np.sort(y[tr])[19]  # left median of 40 points
        assert rep.pe1[b] == pytest.approx(np.mean((y[te] - med) ** 2))
        assert rep.pe2[b] == pytest.approx(np.mean((y[te] - y[tr].mean()) ** 2))


def test_deterministic(rng):
    X = rng.normal(size=(80, 6))
    y = X[:, 0] + rng.normal(size=80)
    a = prediction_error(data(y, X), [0, 2], partitions=30, seed=9)
    b = prediction_error(data(y, X), [0, 2], partitions=30, seed=9)
    assert np.array_equal(a.pe1, b.pe1) and np.array_equal(a.pe2, b.pe2)
    assert a.pe1_mean == pytest.approx(a.pe1.mean())


def test_signal_beats_noise(rng):
    # b1 coefficients on clean Gaussian covariates
    X = rng.normal(size=(200, 60))
    y = X[:, :5] @ [3.0, 3.0, 2.0, 2.0, 2.0] + rng.normal(size=200)
    good = prediction_error(data(y, X), [0, 1, 2, 3, 4], partitions=100)
    bad = prediction_error(data(y, X), list(range(50, 55)), partitions=100)
    assert bad.pe2_mean >= good.pe2_mean


def test_preconditions(rng):
    X = rng.normal(size=(10, 9))
    y = rng.normal(size=10)
    with pytest.raises(InsufficientDataError):
        prediction_error(data(y, X), list(range(8)))
    with pytest.raises(ValueError):
        prediction_error(data(y, X), [0], ratio=1.5)
    with pytest.raises(ValueError):
        prediction_error(data(y, X), [42])


def test_collinear_selection_uses_ridge(rng):
    X = rng.normal(size=(60, 3))
    X[:, 2] = X[:, 1]
    y = X[:, 1] + rng.normal(size=60)
    rep = prediction_error(data(y, X), [1, 2], partitions=5)
    assert rep.ridge_events == list(range(5))
    assert np.isfinite(rep.pe1_mean) and np.isfinite(rep.pe2_mean)
