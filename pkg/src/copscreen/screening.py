"""Marginal and conditional sure independence screening.

Covariates are indexed from 0. Every ranking sorts utilities in decreasing
order and breaks ties towards the lowest index, so results are reproducible
bit for bit.

``cc_sis`` ranks covariates by |CC| with the response. The CPC screeners rank
by |CPC| given a design that is fixed (``cpc_sis_case2``), or grown greedily
from the covariates themselves (``cpc_sis_case1``, optionally with external
variables in ``cpc_sis_case3``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import kendalltau, norm

from . import quantreg
from .cc import VAR_FLOOR, QuantilePair, cc_columns, cc_variances
from .cpc import cpc_from_residuals, cpc_variances_from_fits
from .empirical import KernelConfig, column_quantiles
from .errors import DesignTooLargeError, InsufficientDataError

THRESHOLD_MODES = ("top_dn", "absolute", "fdr")
CASE_MODES = ("marginal_cc", "cpc_case1", "cpc_case2", "cpc_case3")


def default_dn(n: int) -> int:
    return max(int(math.floor(n / math.log(n))), 1)


def default_dstar(n: int) -> int:
    """Number of greedy steps with a growing conditional set."""
    return int(math.floor(2.0 * math.sqrt(n / math.log(n))))


@dataclass(frozen=True)
class ScreeningConfig:
    pair: QuantilePair = QuantilePair()
    d_n: Optional[int] = None
    threshold_mode: str = "top_dn"
    nu: Optional[float] = None
    d_bar: Optional[float] = None
    case_mode: str = "marginal_cc"
    ell: int = 3
    kernel: KernelConfig = KernelConfig()

    def __post_init__(self):
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.case_mode not in CASE_MODES:
            raise ValueError(f"case_mode must be one of {CASE_MODES}")
        if self.d_n is not None and self.d_n < 1:
            raise ValueError("d_n must be >= 1")
        if self.ell < 0:
            raise ValueError("ell must be >= 0")
        if self.threshold_mode == "absolute" and self.nu is None:
            raise ValueError("absolute mode needs nu")
        if self.threshold_mode == "fdr" and not (self.d_bar is not None and self.d_bar >= 1):
            raise ValueError("fdr mode needs d_bar >= 1")

    def resolved_dn(self, n: int, p: int) -> int:
        return min(self.d_n if self.d_n is not None else default_dn(n), p)


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    chosen_index: int
    conditional_set: tuple
    utility: float
    ridge_used: bool = False


@dataclass
class ScreeningResult:
    utilities: np.ndarray
    ranking: np.ndarray
    selected: np.ndarray
    threshold_used: float
    method: str = ""
    z_stats: Optional[np.ndarray] = None
    per_step_log: List[StepRecord] = field(default_factory=list)

    def rank_of(self, j: int) -> int:
        """1-based position of covariate ``j`` in the ranking."""
        return int(np.flatnonzero(self.ranking == j)[0]) + 1


def rank_desc(utilities) -> np.ndarray:
    u = np.asarray(utilities, dtype=float)
    return np.argsort(-u, kind="stable")


def fdr_delta(p: int, d_bar: float) -> float:
    if not 1 <= d_bar < 2 * p:
        raise ValueError(f"need 1 <= d_bar < 2p, got d_bar={d_bar}, p={p}")
    return float(norm.ppf(1.0 - d_bar / (2.0 * p)))


def fdr_threshold(utilities, variances, n: int, p: int, d_bar: float) -> np.ndarray:
    """Indices whose standardised utility reaches ``Phi^{-1}(1 - d_bar / 2p)``."""
    u = np.asarray(utilities, dtype=float)
    v = np.asarray(variances, dtype=float)
    if np.any(v <= 0):
        raise ValueError("variances must be positive")
    delta = fdr_delta(p, d_bar)
    return np.flatnonzero(math.sqrt(n) * u / np.sqrt(v) >= delta)


def _inputs(y, X):
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"shape mismatch: y {y.shape}, X {X.shape}")
    if y.size < 2 or X.shape[1] < 1:
        raise InsufficientDataError("need n >= 2 and p >= 1")
    return y, X


def _finish(utilities, cfg, n, method, variances=None, ranking=None, log=None):
    p = utilities.size
    ranking = rank_desc(utilities) if ranking is None else ranking
    z = None
    if cfg.threshold_mode == "top_dn":
        d = cfg.resolved_dn(n, p)
        selected = ranking[:d]
        threshold = float(utilities[selected[-1]])
    elif cfg.threshold_mode == "absolute":
        selected = ranking[utilities[ranking] >= cfg.nu]
        threshold = float(cfg.nu)
    else:
        v = np.asarray(variances, dtype=float)
        ok = v > VAR_FLOOR
        # a degenerate variance cannot be standardised; such columns never pass
        z = np.where(ok, math.sqrt(n) * utilities / np.sqrt(np.where(ok, v, 1.0)), 0.0)
        threshold = fdr_delta(p, cfg.d_bar)
        selected = ranking[z[ranking] >= threshold]
    return ScreeningResult(utilities, ranking, np.asarray(selected, dtype=int), threshold,
                           method, z, list(log or []))


def cc_sis(y, X, cfg: ScreeningConfig = ScreeningConfig()) -> ScreeningResult:
    y, X = _inputs(y, X)
    u = np.abs(cc_columns(y, X, cfg.pair))
    var = cc_variances(y, X, cfg.pair.clamped(), cfg.kernel) if cfg.threshold_mode == "fdr" else None
    return _finish(u, cfg, y.size, "cc_sis", var)


def _w_matrix(W, n):
    if W is None:
        return np.empty((n, 0))
    W = np.asarray(W, dtype=float)
    return W.reshape(n, -1)


def cpc_sis_case2(y, X, W, cfg: ScreeningConfig = ScreeningConfig()) -> ScreeningResult:
    """CPC screening with the same design ``[1, W]`` for every covariate."""
    y, X = _inputs(y, X)
    n = y.size
    W = _w_matrix(W, n)
    Z = np.hstack([np.ones((n, 1)), W])
    if n <= Z.shape[1] + 2:
        raise InsufficientDataError(f"need n > r + 3, got n={n}, r={W.shape[1]}")
    fa = quantreg.fit(Z, y, cfg.pair.tau)
    fx = quantreg.fit_many(Z, X.T, cfg.pair.iota)
    u = np.abs(cpc_from_residuals(fa.residuals, fx.residuals, cfg.pair))
    var = None
    if cfg.threshold_mode == "fdr":
        var = cpc_variances_from_fits(Z, fa.residuals, fx.residuals, cfg.pair.clamped(), cfg.kernel)
    return _finish(u, cfg, n, "cpc_sis_case2", var)


def confounder_sets(X, pair: QuantilePair, ell: int) -> List[tuple]:
    """For each ``j``, the ``ell`` covariates with the largest |CC(X_j, X_k)|, k != j."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    ell = min(ell, p - 1)
    if ell <= 0:
        return [()] * p
    py = pair.tau - (X <= column_quantiles(X, pair.tau))
    px = pair.iota - (X <= column_quantiles(X, pair.iota))
    C = np.abs(py.T @ px) / n / pair.scale
    np.fill_diagonal(C, -np.inf)
    order = np.argsort(-C, axis=1, kind="stable")[:, :ell]
    return [tuple(int(k) for k in row) for row in order]


def _conditional_utilities(y, X, W, sets, candidates, pair):
    """|CPC| of ``y`` and each candidate given ``[1, W, X[:, sets[j]]]``."""
    n = y.size
    base = np.hstack([np.ones((n, 1)), W])
    u = np.zeros(len(candidates))
    ridge = np.zeros(len(candidates), dtype=bool)
    by_size = {}
    for pos, j in enumerate(candidates):
        by_size.setdefault(len(sets[j]), []).append(pos)
    for size, members in sorted(by_size.items()):
        q = base.shape[1] + size
        if q >= n - 2:
            raise DesignTooLargeError(f"conditional design has {q} columns for n={n}")
        Zs = np.empty((len(members), n, q))
        Zs[:, :, : base.shape[1]] = base
        for b, pos in enumerate(members):
            Zs[b, :, base.shape[1]:] = X[:, list(sets[candidates[pos]])]
        js = [candidates[pos] for pos in members]
        fa = quantreg.fit_many(Zs, y, pair.tau)
        fx = quantreg.fit_many(Zs, X[:, js].T, pair.iota)
        vals = np.abs(cpc_from_residuals(fa.residuals, fx.residuals, pair))
        u[members] = vals
        ridge[members] = fa.ridge_used | fx.ridge_used
    return u, ridge


def _ordered_set(active, extra, j):
    seen = []
    for k in list(active) + list(extra):
        if k != j and k not in seen:
            seen.append(k)
    return tuple(seen)


def _greedy_cpc(y, X, W, cfg: ScreeningConfig, method: str) -> ScreeningResult:
    if cfg.threshold_mode == "fdr":
        raise ValueError("fdr thresholds are only available for marginal_cc and cpc_case2")
    y, X = _inputs(y, X)
    n, p = X.shape
    W = _w_matrix(W, n)
    if n < 30:
        raise InsufficientDataError(f"greedy CPC screening needs n >= 30, got {n}")
    pair = cfg.pair
    s_nu = confounder_sets(X, pair, cfg.ell)
    utilities = np.zeros(p)
    active: List[int] = []
    log: List[StepRecord] = []

    steps = min(default_dstar(n), p)
    for k in range(1, steps + 1):
        cand = [j for j in range(p) if j not in active]
        sets = {j: _ordered_set(active, s_nu[j], j) for j in cand}
        u, ridge = _conditional_utilities(y, X, W, sets, cand, pair)
        best = int(np.argmax(u))  # first maximum, i.e. lowest index
        j_star = cand[best]
        utilities[j_star] = u[best]
        active.append(j_star)
        log.append(StepRecord(k, j_star, sets[j_star], float(u[best]), bool(ridge[best])))

    # remaining covariates: conditional sets frozen at the final active set
    rest = [j for j in range(p) if j not in active]
    if rest:
        sets = {j: _ordered_set(active, s_nu[j], j) for j in rest}
        u, ridge = _conditional_utilities(y, X, W, sets, rest, pair)
        utilities[rest] = u
        order = np.argsort(-u, kind="stable")
        tail = [rest[i] for i in order]
        d = cfg.resolved_dn(n, p)
        for step, i in enumerate(order[: max(d - len(active), 0)], start=steps + 1):
            j = rest[i]
            log.append(StepRecord(step, j, sets[j], float(u[i]), bool(ridge[i])))
    else:
        tail = []
    ranking = np.array(active + tail, dtype=int)
    return _finish(utilities, cfg, n, method, ranking=ranking, log=log)


def cpc_sis_case1(y, X, cfg: ScreeningConfig = ScreeningConfig()) -> ScreeningResult:
    """Greedy CPC screening conditioning on other covariates only."""
    return _greedy_cpc(y, X, None, cfg, "cpc_sis_case1")


def cpc_sis_case3(y, X, W, cfg: ScreeningConfig = ScreeningConfig()) -> ScreeningResult:
    """Greedy CPC screening conditioning on ``W`` plus other covariates."""
    return _greedy_cpc(y, X, W, cfg, "cpc_sis_case3")


def pearson_utilities(y, X) -> np.ndarray:
    y, X = _inputs(y, X)
    yc = y - y.mean()
    Xc = X - X.mean(axis=0)
    den = np.sqrt((yc @ yc) * (Xc * Xc).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, (yc @ Xc) / np.where(den > 0, den, 1.0), 0.0)
    return np.abs(r)


def kendall_utilities(y, X) -> np.ndarray:
    y, X = _inputs(y, X)
    out = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        t = kendalltau(y, X[:, j]).statistic
        out[j] = 0.0 if not np.isfinite(t) else abs(t)
    return out


BASELINES = {"pearson_sis": pearson_utilities, "kendall_sis": kendall_utilities}


def baseline_screeners(y, X, method: str = "pearson_sis", d_n: Optional[int] = None) -> ScreeningResult:
    if method not in BASELINES:
        raise ValueError(f"method must be one of {sorted(BASELINES)}")
    y, X = _inputs(y, X)
    u = BASELINES[method](y, X)
    return _finish(u, ScreeningConfig(d_n=d_n), y.size, method)


def screen(y, X, W=None, cfg: ScreeningConfig = ScreeningConfig()) -> ScreeningResult:
    """Dispatch on ``cfg.case_mode``."""
    if cfg.case_mode == "marginal_cc":
        return cc_sis(y, X, cfg)
    if cfg.case_mode == "cpc_case1":
        return cpc_sis_case1(y, X, cfg)
    if cfg.case_mode == "cpc_case2":
        return cpc_sis_case2(y, X, W, cfg)
    return cpc_sis_case3(y, X, W, cfg)


def minimum_model_size(ranking: Sequence[int], active: Sequence[int]) -> int:
    pos = {int(j): i for i, j in enumerate(ranking)}
    return max(pos[int(j)] for j in active) + 1


__all__ = [
    "ScreeningConfig", "ScreeningResult", "StepRecord", "default_dn", "default_dstar",
    "rank_desc", "fdr_delta", "fdr_threshold", "cc_sis", "cpc_sis_case1", "cpc_sis_case2",
    "cpc_sis_case3", "confounder_sets", "baseline_screeners", "pearson_utilities",
    "kendall_utilities", "screen", "minimum_model_size",
]
