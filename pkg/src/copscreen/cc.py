"""Copula-based correlation between two samples at a pair of quantile levels.

The estimator is the normalised mean of ``psi_tau(y - q_y) * psi_iota(x - q_x)``
with ``q`` the empirical (left-continuous) quantiles. Only ranks enter, so the
value is unchanged by strictly increasing transforms of either margin.

Variance estimates follow the influence-function route: every observation gets
a score ``xi_i`` built from the two quantile indicators and two conditional
exceedance probabilities, and the variance is the empirical variance of the
scores. The conditional probabilities are Nadaraya-Watson estimates computed
on the pseudo-observation (rank / n) scale, which keeps the whole variance
estimate invariant to monotone transforms of the data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .empirical import (
    KernelConfig,
    column_quantiles,
    nw_weights,
    pseudo_observations,
    quantile_rank,
    resolve_bandwidth,
)
from .errors import DegenerateVarianceError, InsufficientDataError

INFERENCE_RANGE = (0.05, 0.95)
MIN_N_INFERENCE = 20
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class QuantilePair:
    tau: float = 0.5
    iota: float = 0.5

    def __post_init__(self):
        for name in ("tau", "iota"):
            v = float(getattr(self, name))
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def scale(self) -> float:
        """``sqrt(tau(1-tau) iota(1-iota))``, the normalising constant."""
        t, i = self.tau, self.iota
        return math.sqrt(t * (1 - t) * i * (1 - i))

    def clamped(self, lo=INFERENCE_RANGE[0], hi=INFERENCE_RANGE[1]) -> "QuantilePair":
        return QuantilePair(min(max(self.tau, lo), hi), min(max(self.iota, lo), hi))

    @classmethod
    def parse(cls, text: str) -> "QuantilePair":
        parts = [s.strip() for s in str(text).split(",")]
        if len(parts) == 1:
            parts = parts * 2
        if len(parts) != 2:
            raise ValueError(f"expected 'tau,iota', got {text!r}")
        return cls(float(parts[0]), float(parts[1]))


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    pair: QuantilePair
    n: int
    variance: Optional[float] = None
    z_stat: Optional[float] = None
    p_value: Optional[float] = None


@dataclass(frozen=True)
class EqualityTest:
    delta: float
    variance: float
    z_stat: float
    p_value: float
    pair: QuantilePair
    n: int


def two_sided_p(z: float) -> float:
    return float(2.0 * norm.sf(abs(z)))


def _pair_arrays(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"y and x must be 1-d of equal length, got {y.shape} and {x.shape}")
    if y.size < 2:
        raise InsufficientDataError("need at least two observations")
    return y, x


def cc_value(y, x, pair: QuantilePair) -> float:
    y, x = _pair_arrays(y, x)
    return float(cc_columns(y, x[:, None], pair)[0])


def cc_columns(y, X, pair: QuantilePair) -> np.ndarray:
    """CC of ``y`` with every column of ``X`` in one pass."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n = y.size
    if n < 2:
        raise InsufficientDataError("need at least two observations")
    qy = column_quantiles(y, pair.tau)
    qx = column_quantiles(X, pair.iota)
    py = pair.tau - (y <= qy)
    px = pair.iota - (X <= qx)
    return (py @ px) / n / pair.scale


def cc_estimate(y, x, pair: QuantilePair = QuantilePair()) -> CorrelationEstimate:
    y, x = _pair_arrays(y, x)
    return CorrelationEstimate(cc_value(y, x, pair), pair, y.size)


def _conditional_prob(u, target, u0, cfg):
    """NW estimate of P(target | u = u0), clipped to [0, 1]."""
    h = resolve_bandwidth(u, cfg)
    w = nw_weights(u, u0, h)
    return float(np.clip(w @ target / w.sum(), 0.0, 1.0))


def xi_scores(y, x, pair: QuantilePair, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Plug-in influence scores whose empirical covariance estimates the CC variance."""
    y, x = _pair_arrays(y, x)
    n = y.size
    iy = y <= column_quantiles(y, pair.tau)
    ix = x <= column_quantiles(x, pair.iota)
    uy = pseudo_observations(y)
    ux = pseudo_observations(x)
    # the empirical quantile sits at pseudo-observation k/n
    s_xy = _conditional_prob(uy, ix, quantile_rank(n, pair.tau) / n, cfg)
    s_yx = _conditional_prob(ux, iy, quantile_rank(n, pair.iota) / n, cfg)
    return ((iy & ix) - s_xy * iy - s_yx * ix) / pair.scale


def _check_inference_n(n):
    if n < MIN_N_INFERENCE:
        raise InsufficientDataError(f"inference needs n >= {MIN_N_INFERENCE}, got {n}")


def _centered_cov(a, b) -> float:
    return float(np.mean((a - a.mean()) * (b - b.mean())))


def cc_offdiag_cov(y, x, pair1: QuantilePair, pair2: QuantilePair,
                   cfg: KernelConfig = KernelConfig()) -> float:
    y, x = _pair_arrays(y, x)
    _check_inference_n(y.size)
    a = xi_scores(y, x, pair1.clamped(), cfg)
    b = a if pair2 == pair1 else xi_scores(y, x, pair2.clamped(), cfg)
    return _centered_cov(a, b)


def cc_variance(y, x, pair: QuantilePair = QuantilePair(),
                cfg: KernelConfig = KernelConfig()) -> float:
    return cc_offdiag_cov(y, x, pair, pair, cfg)


def cc_test_zero(y, x, pair: QuantilePair = QuantilePair(),
                 cfg: KernelConfig = KernelConfig()) -> CorrelationEstimate:
    y, x = _pair_arrays(y, x)
    _check_inference_n(y.size)
    pair = pair.clamped()
    value = cc_value(y, x, pair)
    var = cc_variance(y, x, pair, cfg)
    if var <= VAR_FLOOR:
        raise DegenerateVarianceError(f"variance estimate {var!r} is too small")
    z = math.sqrt(y.size) * value / math.sqrt(var)
    return CorrelationEstimate(value, pair, y.size, var, z, two_sided_p(z))


def cc_test_equal(y, x1, x2, pair: QuantilePair = QuantilePair(),
                  cfg: KernelConfig = KernelConfig()) -> EqualityTest:
    """Test equal CC of ``y`` with ``x1`` and with ``x2``."""
    y, x1 = _pair_arrays(y, x1)
    _, x2 = _pair_arrays(y, x2)
    n = y.size
    _check_inference_n(n)
    pair = pair.clamped()
    delta = cc_value(y, x1, pair) - cc_value(y, x2, pair)
    eta = xi_scores(y, x1, pair, cfg) - xi_scores(y, x2, pair, cfg)
    var = float(np.var(eta))
    if var <= VAR_FLOOR:
        raise DegenerateVarianceError(f"variance estimate {var!r} is too small")
    z = math.sqrt(n) * delta / math.sqrt(var)
    return EqualityTest(delta, var, z, two_sided_p(z), pair, n)


def cc_variances(y, X, pair: QuantilePair, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """``cc_variance`` of ``y`` against each column of ``X``."""
    X = np.asarray(X, dtype=float)
    return np.array([cc_variance(y, X[:, j], pair, cfg) for j in range(X.shape[1])])


__all__ = [
    "QuantilePair", "CorrelationEstimate", "EqualityTest", "cc_estimate", "cc_value",
    "cc_columns", "xi_scores", "cc_variance", "cc_offdiag_cov", "cc_test_zero",
    "cc_test_equal", "cc_variances", "two_sided_p",
]
