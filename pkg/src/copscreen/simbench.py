"""Synthetic designs for size/power and screening studies, plus their metrics.

Each replication draws from ``np.random.default_rng([seed, rep_index])`` so a
single replication can be regenerated on its own and results do not depend on
how replications are scheduled across workers.

Covariate indices are 0-based: ``X[:, 0]`` plays the role of the first
covariate in each model.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .cc import QuantilePair, cc_test_equal
from .cpc import ConditioningDesign, cpc_test_equal
from .errors import CopscreenError
from .screening import (
    ScreeningConfig,
    baseline_screeners,
    cc_sis,
    cpc_sis_case1,
    cpc_sis_case2,
    cpc_sis_case3,
    minimum_model_size,
)

EXAMPLES = ("ex1_a1", "ex1_a2", "ex2", "ex3_b1", "ex3_b2", "ex3_b3", "ex4_d1", "ex4_d2", "ex5")
ERRORS = ("normal", "cauchy", "scaled_cauchy", "scaled_t3")
TEST_EXAMPLES = ("ex1_a1", "ex1_a2", "ex2")
RSD_SCALE = 1.349
# smallest p that holds every active covariate
MIN_P = {"ex3_b1": 5, "ex3_b2": 10, "ex3_b3": 4, "ex4_d1": 4, "ex4_d2": 4, "ex5": 4}


@dataclass(frozen=True)
class SimulationSpec:
    example: str = "ex3_b1"
    n: int = 200
    p: int = 1000
    rho: float = 0.5
    c0: float = 0.0
    error_dist: str = "normal"
    reps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"unknown example {self.example!r}; choose from {EXAMPLES}")
        if self.error_dist not in ERRORS:
            raise ValueError(f"unknown error_dist {self.error_dist!r}; choose from {ERRORS}")
        if self.reps < 1 or self.n < 2:
            raise ValueError("need reps >= 1 and n >= 2")
        need = MIN_P.get(self.example, 2)
        if self.p < need:
            raise ValueError(f"{self.example} needs p >= {need}")

    def coordinates(self) -> dict:
        return {"example": self.example, "n": self.n, "p": self.p, "rho": self.rho,
                "c0": self.c0, "error_dist": self.error_dist, "reps": self.reps,
                "seed": self.seed}


@dataclass
class SimData:
    y: np.ndarray
    X: np.ndarray
    W: Optional[np.ndarray]
    active: tuple


def cauchy(rng, size):
    return np.tan(np.pi * (rng.random(size) - 0.5))


def draw_error(rng, kind, n):
    if kind == "normal":
        return rng.standard_normal(n)
    if kind == "cauchy":
        return cauchy(rng, n)
    if kind == "scaled_cauchy":
        return cauchy(rng, n) / 3.0
    return rng.standard_t(3, n) / 3.0


def ar1_gaussian(rng, n, p, rho):
    """Rows of N(0, (rho^|j-k|)) via the stationary AR(1) recursion."""
    e = rng.standard_normal((n, p))
    out = np.empty_like(e)
    out[:, 0] = e[:, 0]
    s = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        out[:, j] = rho * out[:, j - 1] + s * e[:, j]
    return out


def _bivariate(rng, n, rho):
    e = rng.standard_normal((n, 2))
    return np.column_stack([e[:, 0], rho * e[:, 0] + math.sqrt(1 - rho * rho) * e[:, 1]])


def _equicorrelated(rng, n, p, rho, block=None):
    """Equicorrelation rho with the fourth column at sqrt(rho) to the others.

    With ``block`` set, only the first ``block`` columns share the factor and
    the rest are independent standard normals.
    """
    f = rng.standard_normal(n)
    e = rng.standard_normal((n, p))
    m = p if block is None else block
    X = e.copy()
    X[:, :m] = math.sqrt(rho) * f[:, None] + math.sqrt(1 - rho) * e[:, :m]
    X[:, 3] = f
    return X


def generate(spec: SimulationSpec, rep_index: int = 0) -> SimData:
    rng = np.random.default_rng([spec.seed, rep_index])
    n, p, rho, c0 = spec.n, spec.p, spec.rho, spec.c0
    ex = spec.example
    if ex == "ex1_a1":
        X = _bivariate(rng, n, rho)
        y = np.exp(2 * X[:, 0]) + np.exp((2 + c0) * X[:, 1])
        return SimData(y, X, None, (0, 1))
    if ex == "ex1_a2":
        X0 = _bivariate(rng, n, rho)
        eps = draw_error(rng, spec.error_dist, n)
        y = 2 * X0[:, 0] + (2 + c0) * X0[:, 1] + eps
        X = 0.9 * X0 + 0.1 * cauchy(rng, (n, 2)) / 5.0
        return SimData(y, X, None, (0, 1))
    if ex == "ex2":
        W = ar1_gaussian(rng, n, 4, rho)
        b = np.array([3.0, 4.0, 3.0, 4.0])
        X = (W @ b)[:, None] + rng.standard_t(3, (n, 2)) / 3.0
        eps = draw_error(rng, spec.error_dist, n)
        y = 2 * X[:, 0] + (2 + c0) * X[:, 1] + W @ b + eps
        return SimData(y, X, W, (0, 1))
    if ex.startswith("ex3"):
        Xs = ar1_gaussian(rng, n, p, rho)
        X = 0.8 * Xs + 0.2 * cauchy(rng, (n, p))
        eps = draw_error(rng, spec.error_dist, n)
        if ex == "ex3_b1":
            y = Xs[:, :5] @ np.array([3.0, 3.0, 2.0, 2.0, 2.0]) + eps
            return SimData(y, X, None, (0, 1, 2, 3, 4))
        if ex == "ex3_b2":
            y = (5 * Xs[:, 0] * (Xs[:, 0] < 0) + 5 * Xs[:, 1] * (Xs[:, 1] > 0)
                 + 5 * np.sin(Xs[:, 9]) + eps)
            return SimData(y, X, None, (0, 1, 9))
        c = np.array([1.0, 0.5, 1.0])
        sign = np.where(rng.random(3) < 0.4, -1.0, 1.0)
        beta = c * sign * (4 * math.log(n) / math.sqrt(n) + 0.5 * rng.standard_normal(3))
        with np.errstate(over="ignore", divide="ignore"):
            y = np.exp(3 * beta[0] * np.sin(Xs[:, 0]) + 2 * beta[1] * np.exp(Xs[:, 1])
                       + 1.5 * beta[2] * (Xs[:, 2] > 0) + 2 * np.log(np.abs(Xs[:, 3]))) + eps
        return SimData(y, X, None, (0, 1, 2, 3))
    if ex.startswith("ex4"):
        beta = 4.0
        coef = np.array([beta, beta, beta, -3 * beta * math.sqrt(rho)])
        eps = draw_error(rng, spec.error_dist, n)
        if ex == "ex4_d1":
            X = _equicorrelated(rng, n, p, rho)
            return SimData(X[:, :4] @ coef + eps, X, None, (0, 1, 2, 3))
        Xs = _equicorrelated(rng, n, p, rho, block=4)
        X = 0.9 * Xs + 0.1 * cauchy(rng, (n, p)) / 5.0
        return SimData(Xs[:, :4] @ coef + eps, X, None, (0, 1, 2, 3))
    # ex5: covariates share the latent W
    W = ar1_gaussian(rng, n, 4, rho)
    b = np.array([2.0, 4.0 / 3.0, 2.0, 4.0 / 3.0])
    X = (W @ b)[:, None] + cauchy(rng, (n, p)) / 3.0
    eps = draw_error(rng, spec.error_dist, n)
    y = X[:, :4] @ np.array([2.0, 2.0, -4.0, 3.0]) + eps
    return SimData(y, X, W, (0, 1, 2, 3))


@dataclass
class MethodSummary:
    method: str
    mms_median: float
    mms_rsd: float
    rank_medians: tuple
    coverage_P: float
    mms: np.ndarray = field(repr=False)
    ranks: np.ndarray = field(repr=False)  # (reps, |active|), 1-based


@dataclass
class SimulationReport:
    spec: SimulationSpec
    kind: str
    pair: Optional[QuantilePair] = None
    records: List[dict] = field(default_factory=list)
    rejection_rate: Optional[float] = None
    failed: int = 0
    summaries: Dict[str, MethodSummary] = field(default_factory=dict)


def robust_sd(values) -> float:
    q75, q25 = np.percentile(np.asarray(values, dtype=float), [75, 25])
    return float((q75 - q25) / RSD_SCALE)


def _pool_map(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _test_rep(args):
    spec, pair, level, rep = args
    data = generate(spec, rep)
    try:
        if spec.example == "ex2":
            design = ConditioningDesign.build(spec.n, W=data.W)
            t = cpc_test_equal(data.y, data.X[:, 0], data.X[:, 1], design, pair)
        else:
            t = cc_test_equal(data.y, data.X[:, 0], data.X[:, 1], pair)
    except CopscreenError as err:
        return {"rep": rep, "delta": float("nan"), "z_stat": float("nan"),
                "p_value": float("nan"), "reject": 0, "error": type(err).__name__}
    return {"rep": rep, "delta": t.delta, "z_stat": t.z_stat, "p_value": t.p_value,
            "reject": int(t.p_value < level), "error": ""}


def run_test_study(spec: SimulationSpec, pair: QuantilePair = QuantilePair(),
                   level: float = 0.05, jobs: int = 1) -> SimulationReport:
    """Rejection rate of the two-covariate equality test over replications."""
    if spec.example not in TEST_EXAMPLES:
        raise ValueError(f"test studies run on {TEST_EXAMPLES}, got {spec.example!r}")
    recs = _pool_map(_test_rep, [(spec, pair, level, r) for r in range(spec.reps)], jobs)
    rate = float(np.mean([r["reject"] for r in recs]))
    failed = sum(1 for r in recs if r["error"])
    return SimulationReport(spec, "test", pair, recs, rate, failed)


def parse_method(text: str, default_pair: QuantilePair):
    """``name`` or ``name@tau,iota``."""
    name, _, pair_text = text.partition("@")
    pair = QuantilePair.parse(pair_text) if pair_text else default_pair
    return name.strip(), pair


METHODS = ("cc_sis", "cpc_sis_case1", "cpc_sis_case2", "cpc_sis_case3",
           "pearson_sis", "kendall_sis")


def run_method(name, data: SimData, cfg: ScreeningConfig):
    if name == "cc_sis":
        return cc_sis(data.y, data.X, cfg)
    if name == "cpc_sis_case1":
        return cpc_sis_case1(data.y, data.X, cfg)
    if name == "cpc_sis_case2":
        return cpc_sis_case2(data.y, data.X, data.W, cfg)
    if name == "cpc_sis_case3":
        return cpc_sis_case3(data.y, data.X, data.W, cfg)
    if name in ("pearson_sis", "kendall_sis"):
        return baseline_screeners(data.y, data.X, name, cfg.d_n)
    raise ValueError(f"unknown method {name!r}; choose from {METHODS}")


def _screen_rep(args):
    spec, cfg, methods, rep = args
    data = generate(spec, rep)
    d = cfg.resolved_dn(spec.n, data.X.shape[1])
    out = []
    for label in methods:
        name, pair = parse_method(label, cfg.pair)
        res = run_method(name, data, ScreeningConfig(pair=pair, d_n=cfg.d_n, ell=cfg.ell,
                                                     kernel=cfg.kernel))
        ranks = [res.rank_of(j) for j in data.active]
        out.append({"rep": rep, "method": label, "ranks": ranks,
                    "mms": minimum_model_size(res.ranking, data.active),
                    "covered": int(max(ranks) <= d)})
    return out


def run_screening_study(spec: SimulationSpec, cfg: ScreeningConfig = ScreeningConfig(),
                        methods: Sequence[str] = ("cc_sis",), jobs: int = 1) -> SimulationReport:
    """Minimum model size, active ranks and coverage for each screening method."""
    if spec.example in TEST_EXAMPLES:
        raise ValueError(f"{spec.example!r} is a testing example")
    methods = list(methods)
    for label in methods:
        name, _ = parse_method(label, cfg.pair)
        if name not in METHODS:
            raise ValueError(f"unknown method {name!r}; choose from {METHODS}")
    per_rep = _pool_map(_screen_rep, [(spec, cfg, methods, r) for r in range(spec.reps)], jobs)
    records = [rec for rep in per_rep for rec in rep]
    summaries = {}
    for label in methods:
        rows = [r for r in records if r["method"] == label]
        mms = np.array([r["mms"] for r in rows])
        ranks = np.array([r["ranks"] for r in rows])
        summaries[label] = MethodSummary(
            label, float(np.median(mms)), robust_sd(mms),
            tuple(float(v) for v in np.median(ranks, axis=0)),
            float(np.mean([r["covered"] for r in rows])), mms, ranks)
    return SimulationReport(spec, "screening", cfg.pair, records, summaries=summaries)


__all__ = [
    "EXAMPLES", "ERRORS", "METHODS", "SimulationSpec", "SimData", "SimulationReport",
    "MethodSummary", "generate", "run_test_study", "run_screening_study", "robust_sd",
    "parse_method", "run_method", "cauchy", "ar1_gaussian",
]
