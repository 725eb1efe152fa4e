"""Empirical distribution, quantile and kernel-smoothing primitives.

Every estimator in the package is built from these few functions, so they are
kept deliberately literal: the empirical quantile is the left-continuous
generalised inverse of the ECDF (no interpolation) and ties are counted with
``<=``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegenerateWindowError, InsufficientDataError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SortedSample:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise InsufficientDataError("a sample needs at least one value")
        if np.any(np.diff(v) < 0):
            raise ValueError("values must be sorted ascending")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_data(cls, data) -> "SortedSample":
        return cls(np.sort(np.asarray(data, dtype=float)))

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class KernelConfig:
    """Kernel smoother settings; ``bandwidth="auto"`` selects Silverman's rule."""

    kernel: str = "gaussian"
    bandwidth: Union[float, str] = "auto"

    def __post_init__(self):
        if self.kernel != "gaussian":
            raise ValueError(f"unsupported kernel {self.kernel!r}")
        if self.bandwidth != "auto":
            if not float(self.bandwidth) > 0:
                raise ValueError("bandwidth must be positive")


def ecdf(sample: SortedSample, x: float) -> float:
    return np.searchsorted(sample.values, x, side="right") / sample.n


def quantile_rank(n: int, tau: float) -> int:
    """Smallest k in 1..n with k/n >= tau, evaluated in floating point.

    Matches ``inf{x : F_n(x) >= tau}`` exactly, including cases where
    ``n * tau`` lands a rounding error above an integer.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {tau!r}")
    k = min(max(math.ceil(n * tau), 1), n)
    while k > 1 and (k - 1) / n >= tau:
        k -= 1
    while k < n and k / n < tau:
        k += 1
    return k


def equantile(sample: SortedSample, tau: float) -> float:
    return float(sample.values[quantile_rank(sample.n, tau) - 1])


def column_quantiles(X: np.ndarray, tau: float) -> np.ndarray:
    """``equantile`` applied to every column of ``X`` (or to a vector)."""
    X = np.asarray(X, dtype=float)
    k = quantile_rank(X.shape[0], tau)
    return np.partition(X, k - 1, axis=0)[k - 1]


def psi(w, u):
    """Check-loss score ``w - 1{u <= 0}``; vectorised over ``u``."""
    return w - (np.asarray(u) <= 0)


def check_loss(w, u):
    u = np.asarray(u, dtype=float)
    return u * (w - (u <= 0))


def gaussian_kernel(u):
    return np.exp(-0.5 * np.square(u)) / _SQRT_2PI


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    n = x.size
    sd = x.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if not spread > 0:
        # IQR collapses for heavily tied data; fall back to whichever is positive
        spread = max(sd, (q75 - q25) / 1.34)
    if not spread > 0:
        raise DegenerateWindowError("cannot choose a bandwidth for constant data")
    return 1.06 * spread * n ** (-0.2)


def resolve_bandwidth(x, cfg: KernelConfig) -> float:
    if cfg.bandwidth == "auto":
        return silverman_bandwidth(x)
    return float(cfg.bandwidth)


def nw_weights(x, x0: float, h: float) -> np.ndarray:
    w = gaussian_kernel((x0 - np.asarray(x, dtype=float)) / h)
    if not w.sum() > 0:
        raise DegenerateWindowError(f"no kernel mass near {x0!r} at bandwidth {h!r}")
    return w


def nw_regress(x, y, x0: float, cfg: KernelConfig = KernelConfig()) -> float:
    """Nadaraya-Watson estimate of E[y | x = x0]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise InsufficientDataError("nw_regress needs two equal-length arrays with n >= 2")
    w = nw_weights(x, x0, resolve_bandwidth(x, cfg))
    return float(w @ y / w.sum())


def kde_at_zero(residuals, cfg: KernelConfig = KernelConfig()) -> float:
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise InsufficientDataError("kde_at_zero needs n >= 2")
    h = resolve_bandwidth(r, cfg)
    return float(gaussian_kernel(-r / h).sum() / (r.size * h))


def pseudo_observations(x) -> np.ndarray:
    """ECDF of each observation within its own sample, ``#{j: x_j <= x_i}/n``.

    Works column-wise on matrices.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if x.ndim == 1:
        s = np.sort(x)
        return np.searchsorted(s, x, side="right") / n
    s = np.sort(x, axis=0)
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        out[:, j] = np.searchsorted(s[:, j], x[:, j], side="right")
    return out / n
