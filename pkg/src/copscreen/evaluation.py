"""Out-of-sample prediction error of models built on screened covariates.

For each random train/test split a median regression (PE1) and a least
squares fit (PE2) of ``y`` on ``[1, X_selected]`` are fitted to the training
rows; both are scored by mean squared error on the test rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from . import quantreg
from .errors import InsufficientDataError

RIDGE = 1e-8


@dataclass
class PeReport:
    pe1_mean: float
    pe2_mean: float
    partitions: int
    train_ratio: float
    k: int
    pe1: np.ndarray = field(repr=False)
    pe2: np.ndarray = field(repr=False)
    ridge_events: List[int] = field(default_factory=list)


def _least_squares(Z, y):
    """OLS coefficients, with a small ridge when ``Z`` is rank deficient."""
    G = Z.T @ Z
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        return np.linalg.solve(G + RIDGE * np.eye(Z.shape[1]), Z.T @ y), True
    return np.linalg.solve(G, Z.T @ y), False


def prediction_error(dataset, selected: Sequence[int], partitions: int = 500,
                     ratio: float = 0.8, seed: int = 0) -> PeReport:
    """Mean test-set squared error of median (PE1) and OLS (PE2) fits.

    ``dataset`` is anything with ``y`` and ``X`` attributes. Split ``b`` is
    drawn from ``np.random.default_rng([seed, b])``.
    """
    y = np.asarray(dataset.y, dtype=float)
    X = np.asarray(dataset.X, dtype=float)
    selected = [int(j) for j in selected]
    n = y.size
    k = len(selected)
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    if partitions < 1:
        raise ValueError("partitions must be >= 1")
    if any(j < 0 or j >= X.shape[1] for j in selected):
        raise ValueError("selected index out of range")
    n_train = int(round(ratio * n))
    if k >= ratio * n or n_train <= k + 1 or n_train >= n:
        raise InsufficientDataError(f"cannot split n={n} at ratio {ratio} for k={k} covariates")

    Z = np.hstack([np.ones((n, 1)), X[:, selected]])
    pe1 = np.empty(partitions)
    pe2 = np.empty(partitions)
    ridge_events = []
    for b in range(partitions):
        perm = np.random.default_rng([seed, b]).permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        f1 = quantreg.fit(Z[tr], y[tr], 0.5)
        c2, ridged = _least_squares(Z[tr], y[tr])
        if ridged or f1.ridge_used:
            ridge_events.append(b)
        pe1[b] = np.mean((y[te] - Z[te] @ f1.coefficients) ** 2)
        pe2[b] = np.mean((y[te] - Z[te] @ c2) ** 2)
    return PeReport(float(pe1.mean()), float(pe2.mean()), partitions, ratio, k, pe1, pe2,
                    ridge_events)


__all__ = ["PeReport", "prediction_error"]
