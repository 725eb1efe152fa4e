"""Copula-based partial correlation given conditioning variables ``Z``.

Both margins are first reduced to quantile-regression residuals on ``Z``
(``y`` at level tau, ``x`` at level iota); the statistic is then the
normalised mean product of the two check-loss scores.

Variance estimates use the plug-in influence score

    zeta_i = [J_i + psi_tau(ry_i) z_i'a + psi_iota(rx_i) z_i'b] / s

with ``J_i = 1{ry_i <= 0, rx_i <= 0}``, ``a = D11^{-1} D12`` and
``b = D22^{-1} D21``. Each ``D`` block is a kernel-weighted average around a
zero residual, i.e. a density estimate at 0 times a Nadaraya-Watson mean. The
variance of a single statistic, or of a difference of two, is the empirical
variance of the matching scores, which is non-negative by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import quantreg
from .cc import VAR_FLOOR, EqualityTest, QuantilePair, two_sided_p
from .empirical import KernelConfig, gaussian_kernel, resolve_bandwidth
from .errors import DegenerateVarianceError, InsufficientDataError

MIN_N_VARIANCE = 50
PROVENANCES = ("constant_only", "external_W", "covariate_subset", "mixed")


@dataclass(frozen=True)
class ConditioningDesign:
    """Design matrix ``Z`` whose first column is the intercept."""

    Z: np.ndarray
    provenance: str = "constant_only"
    covariates: tuple = ()

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] < 1:
            raise ValueError("Z must be an n x q matrix with q >= 1")
        if not np.all(Z[:, 0] == 1.0):
            raise ValueError("first column of Z must be all ones")
        if Z.shape[0] <= Z.shape[1]:
            raise InsufficientDataError(f"need n > q, got n={Z.shape[0]}, q={Z.shape[1]}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "covariates", tuple(int(k) for k in self.covariates))

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @classmethod
    def build(cls, n: int, W=None, X=None, covariates: Sequence[int] = ()) -> "ConditioningDesign":
        """Stack ``[1, W, X[:, covariates]]``."""
        cols = [np.ones((n, 1))]
        has_w = W is not None and np.asarray(W).size > 0
        if has_w:
            W = np.asarray(W, dtype=float)
            cols.append(W.reshape(n, -1))
        covariates = tuple(covariates)
        if covariates:
            cols.append(np.asarray(X, dtype=float)[:, list(covariates)])
        kind = {(False, False): "constant_only", (True, False): "external_W",
                (False, True): "covariate_subset", (True, True): "mixed"}[has_w, bool(covariates)]
        return cls(np.hstack(cols), kind, covariates)


@dataclass(frozen=True)
class CpcEstimate:
    value: float
    pair: QuantilePair
    n: int
    alpha_fit: quantreg.QuantRegFit = field(repr=False)
    theta_fit: quantreg.QuantRegFit = field(repr=False)
    variance: Optional[float] = None
    z_stat: Optional[float] = None
    p_value: Optional[float] = None


def _as_design(design, n) -> ConditioningDesign:
    if design is None:
        return ConditioningDesign(np.ones((n, 1)))
    if isinstance(design, ConditioningDesign):
        return design
    return ConditioningDesign(np.asarray(design, dtype=float))


def _check(y, x, design):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 1 or x.shape != y.shape:
        raise ValueError("y and x must be 1-d of equal length")
    design = _as_design(design, y.size)
    if design.n != y.size:
        raise ValueError(f"design has {design.n} rows, data has {y.size}")
    if y.size <= design.q + 2:
        raise InsufficientDataError(f"need n > q + 2, got n={y.size}, q={design.q}")
    return y, x, design


def cpc_from_residuals(ry, rx, pair: QuantilePair):
    """CPC from quantile residuals; ``rx`` may be (n,) or stacked (B, n)."""
    ry = np.asarray(ry, dtype=float)
    rx = np.asarray(rx, dtype=float)
    py = pair.tau - (ry <= 0)
    px = pair.iota - (rx <= 0)
    return (px * py).mean(axis=-1) / pair.scale


def cpc_estimate(y, x, design=None, pair: QuantilePair = QuantilePair()) -> CpcEstimate:
    y, x, design = _check(y, x, design)
    fa = quantreg.fit(design.Z, y, pair.tau)
    ft = quantreg.fit(design.Z, x, pair.iota)
    value = float(cpc_from_residuals(fa.residuals, ft.residuals, pair))
    return CpcEstimate(value, pair, y.size, fa, ft)


class _ResidualSide:
    """Indicator, score and kernel weights attached to one residual vector."""

    def __init__(self, r, w, cfg):
        self.r = r
        self.below = r <= 0
        self.psi = w - self.below
        h = resolve_bandwidth(r, cfg)
        # density-at-zero times NW weights collapses to K(r/h) / (n h)
        self.k = gaussian_kernel(r / h) / (r.size * h)


def _ridge_solve(A, b):
    q = A.shape[0]
    tr = np.trace(A)
    if not tr > 0:
        raise DegenerateVarianceError("kernel-weighted design moment vanished")
    return np.linalg.solve(A + (1e-8 * tr / q) * np.eye(q), b)


def _zeta(Z, side_y, side_x, pair):
    D11 = (Z * side_y.k[:, None]).T @ Z
    D12 = Z.T @ (side_y.k * side_x.below)
    D22 = (Z * side_x.k[:, None]).T @ Z
    D21 = Z.T @ (side_x.k * side_y.below)
    a = _ridge_solve(D11, D12)
    b = _ridge_solve(D22, D21)
    J = side_y.below & side_x.below
    return (J + side_y.psi * (Z @ a) + side_x.psi * (Z @ b)) / pair.scale


def zeta_scores(y, x, design=None, pair: QuantilePair = QuantilePair(),
                cfg: KernelConfig = KernelConfig(), alpha_fit=None, theta_fit=None) -> np.ndarray:
    """Plug-in influence scores for the CPC of ``y`` and ``x`` given ``design``."""
    y, x, design = _check(y, x, design)
    fa = alpha_fit or quantreg.fit(design.Z, y, pair.tau)
    ft = theta_fit or quantreg.fit(design.Z, x, pair.iota)
    sy = _ResidualSide(fa.residuals, pair.tau, cfg)
    sx = _ResidualSide(ft.residuals, pair.iota, cfg)
    return _zeta(design.Z, sy, sx, pair)


def _check_variance_n(n):
    if n < MIN_N_VARIANCE:
        raise InsufficientDataError(f"CPC variance needs n >= {MIN_N_VARIANCE}, got {n}")


def cpc_variance(y, x, design=None, pair: QuantilePair = QuantilePair(),
                 cfg: KernelConfig = KernelConfig(), alpha_fit=None, theta_fit=None) -> float:
    n = np.asarray(y).size
    _check_variance_n(n)
    z = zeta_scores(y, x, design, pair.clamped(), cfg, alpha_fit, theta_fit)
    return max(float(np.var(z)), 0.0)


def cpc_test_zero(y, x, design=None, pair: QuantilePair = QuantilePair(),
                  cfg: KernelConfig = KernelConfig()) -> CpcEstimate:
    y, x, design = _check(y, x, design)
    _check_variance_n(y.size)
    pair = pair.clamped()
    est = cpc_estimate(y, x, design, pair)
    var = cpc_variance(y, x, design, pair, cfg, est.alpha_fit, est.theta_fit)
    if var <= VAR_FLOOR:
        raise DegenerateVarianceError(f"variance estimate {var!r} is too small")
    z = math.sqrt(y.size) * est.value / math.sqrt(var)
    return CpcEstimate(est.value, pair, y.size, est.alpha_fit, est.theta_fit,
                       var, z, two_sided_p(z))


def cpc_test_equal(y, x1, x2, design=None, pair: QuantilePair = QuantilePair(),
                   cfg: KernelConfig = KernelConfig()) -> EqualityTest:
    """Test equal CPC of ``y`` with ``x1`` and with ``x2`` given the same ``Z``."""
    y, x1, design = _check(y, x1, design)
    _, x2, _ = _check(y, x2, design)
    n = y.size
    _check_variance_n(n)
    pair = pair.clamped()
    Z = design.Z
    fa = quantreg.fit(Z, y, pair.tau)
    f1 = quantreg.fit(Z, x1, pair.iota)
    f2 = quantreg.fit(Z, x2, pair.iota)
    delta = float(cpc_from_residuals(fa.residuals, f1.residuals, pair)
                  - cpc_from_residuals(fa.residuals, f2.residuals, pair))
    sy = _ResidualSide(fa.residuals, pair.tau, cfg)
    beta = (_zeta(Z, sy, _ResidualSide(f1.residuals, pair.iota, cfg), pair)
            - _zeta(Z, sy, _ResidualSide(f2.residuals, pair.iota, cfg), pair))
    var = float(np.var(beta))
    if var <= VAR_FLOOR:
        raise DegenerateVarianceError(f"variance estimate {var!r} is too small")
    z = math.sqrt(n) * delta / math.sqrt(var)
    return EqualityTest(delta, var, z, two_sided_p(z), pair, n)


def cpc_variances_from_fits(Z, ry, RX, pair: QuantilePair,
                            cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Variance of each stacked ``x`` residual row in ``RX`` against the shared ``ry``."""
    sy = _ResidualSide(np.asarray(ry, dtype=float), pair.tau, cfg)
    out = np.empty(len(RX))
    for j, rx in enumerate(RX):
        out[j] = np.var(_zeta(Z, sy, _ResidualSide(rx, pair.iota, cfg), pair))
    return out


__all__ = [
    "ConditioningDesign", "CpcEstimate", "cpc_estimate", "cpc_from_residuals",
    "zeta_scores", "cpc_variance", "cpc_test_zero", "cpc_test_equal",
    "cpc_variances_from_fits",
]
