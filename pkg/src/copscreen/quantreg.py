"""Linear quantile regression under the check loss.

The solver runs a few sweeps of iteratively reweighted least squares on an
epsilon-smoothed check loss to land near the optimum, then takes the ``q``
observations with the smallest residuals as a basis and walks LP edges
(one basis exchange per step, with an exact line search along each edge) until
the dual feasibility condition certifies the vertex as a global minimiser.

``fit_many`` solves a stack of independent problems at once and is what the
screening code uses; ``fit`` is the single-problem front end.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr

from .empirical import check_loss, column_quantiles
from .errors import InsufficientDataError, SingularDesignError

RIDGE = 1e-8
_SHRINK = 0.5
_WARM_ITERS = 15
_WARM_TOL = 1e-4
_DUAL_SLACK = 1e-9
_COND_MAX = 1e10


@dataclass
class QuantRegFit:
    coefficients: np.ndarray
    level: float
    residuals: np.ndarray
    objective: float
    converged: bool
    iterations: int
    ridge_used: bool = False


@dataclass
class BatchFit:
    """Stacked results of ``fit_many``; row ``b`` belongs to problem ``b``."""

    coefficients: np.ndarray  # (B, q)
    level: float
    residuals: np.ndarray  # (B, n)
    objective: np.ndarray  # (B,)
    converged: np.ndarray  # (B,) bool
    iterations: np.ndarray  # (B,) int
    ridge_used: np.ndarray  # (B,) bool

    def __len__(self):
        return self.coefficients.shape[0]

    def __getitem__(self, b) -> QuantRegFit:
        return QuantRegFit(
            coefficients=self.coefficients[b],
            level=self.level,
            residuals=self.residuals[b],
            objective=float(self.objective[b]),
            converged=bool(self.converged[b]),
            iterations=int(self.iterations[b]),
            ridge_used=bool(self.ridge_used[b]),
        )


def mean_check_loss(w, residuals) -> np.ndarray:
    return check_loss(w, residuals).mean(axis=-1)


def fit(Z, y, w, tol=1e-8, max_iter=200, ridge_fallback=True) -> QuantRegFit:
    """Minimise ``mean(rho_w(y - Z @ beta))`` over ``beta``.

    ``Z`` must carry its own intercept column. A design made of a single
    column of ones is solved in closed form by the empirical ``w``-quantile,
    which is the left end of the solution interval when the optimum is flat.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    batch = fit_many(Z[None], y[None], w, tol=tol, max_iter=max_iter,
                     ridge_fallback=ridge_fallback)
    return batch[0]


def fit_many(Z, Y, w, tol=1e-8, max_iter=200, ridge_fallback=True) -> BatchFit:
    """Solve ``B`` quantile regressions at level ``w`` in one vectorised pass.

    ``Z`` is (B, n, q) or a shared (n, q); ``Y`` is (B, n) or a shared (n,).
    """
    if not 0.0 < w < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {w!r}")
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Z.ndim == 2 and Y.ndim == 2:
        Z = np.broadcast_to(Z, (Y.shape[0],) + Z.shape)
    elif Z.ndim == 3 and Y.ndim == 1:
        Y = np.broadcast_to(Y, Z.shape[:2])
    elif Z.ndim == 2 and Y.ndim == 1:
        Z, Y = Z[None], Y[None]
    B, n, q = Z.shape
    if Y.shape != (B, n):
        raise ValueError(f"response shape {Y.shape} does not match design {Z.shape}")
    if n <= q:
        raise InsufficientDataError(f"need more observations ({n}) than regressors ({q})")

    coef = np.zeros((B, q))
    converged = np.zeros(B, dtype=bool)
    iterations = np.zeros(B, dtype=int)
    ridge_used = np.zeros(B, dtype=bool)

    todo = np.ones(B, dtype=bool)
    if q == 1:
        location = np.all(Z[:, :, 0] == 1.0, axis=1)
        if location.any():
            coef[location, 0] = column_quantiles(Y[location].T, w)
            converged[location] = True
            todo &= ~location

    idx = np.flatnonzero(todo)
    if idx.size:
        Zs, Ys = Z[idx], Y[idx]
        deficient = np.linalg.matrix_rank(Zs) < q
        if deficient.any() and not ridge_fallback:
            raise SingularDesignError("design matrix is rank deficient")
        c, conv, its = _solve(Zs, Ys, w, tol, max_iter, deficient)
        coef[idx], converged[idx], iterations[idx] = c, conv, its
        ridge_used[idx] = deficient

    residuals = np.empty((B, n))
    for b in range(B):
        residuals[b] = Y[b] - Z[b] @ coef[b]
    objective = mean_check_loss(w, residuals)
    return BatchFit(coef, w, residuals, objective, converged, iterations, ridge_used)


def _batched_solve(A, b):
    return np.linalg.solve(A, b[..., None])[..., 0]


def _solve(Z, Y, w, tol, max_iter, deficient):
    B, n, q = Z.shape
    ridge = np.where(deficient, RIDGE, 0.0)[:, None, None] * np.eye(q)
    Zt = Z.transpose(0, 2, 1)
    colsum = Z.sum(axis=1)

    ols = _batched_solve(Zt @ Z + ridge + 1e-12 * np.eye(q), (Zt @ Y[..., None])[..., 0])
    beta = ols.copy()

    scale = Y.std(axis=1)
    scale = np.where(scale > 0, scale, np.maximum(np.abs(Y).max(axis=1), 1.0))
    eps = 1e-2 * scale
    eps_min = 1e-8 * scale

    # smoothed IRLS warm start
    warm = min(max_iter, _WARM_ITERS)
    active = np.ones(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    for it in range(1, warm + 1):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        Za, Zta, Ya, ba = Z[act], Zt[act], Y[act], beta[act]
        r = Ya - (Za @ ba[..., None])[..., 0]
        d = 0.5 / np.maximum(np.abs(r), eps[act, None])
        A = (Zta * d[:, None, :]) @ Za + ridge[act]
        rhs = (Zta @ (d * Ya)[..., None])[..., 0] + (w - 0.5) * colsum[act]
        new = _batched_solve(A, rhs)
        step = np.abs(new - ba).max(axis=1) / (1.0 + np.abs(ba).max(axis=1))
        beta[act] = new
        iters[act] = it
        eps[act] = np.maximum(eps[act] * _SHRINK, eps_min[act])
        active[act[step < _WARM_TOL]] = False

    # exact finish: walk LP edges from the smallest-residual basis
    converged = np.zeros(B, dtype=bool)
    for b in range(B):
        budget = max(max_iter - iters[b], 1)
        if deficient[b]:
            # descend on an independent column subset; dropped columns stay at zero
            cols = _independent_columns(Z[b])
            Zr = Z[b][:, cols]
            start = np.linalg.lstsq(Zr, Z[b] @ beta[b], rcond=None)[0]
            vr, ok, pivots = _descend(Zr, Y[b], w, start, budget)
            vb = np.zeros(q)
            vb[cols] = vr
        else:
            vb, ok, pivots = _descend(Z[b], Y[b], w, beta[b], budget)
        iters[b] += pivots
        if ok or _objective(Z[b], Y[b], vb, w) <= _objective(Z[b], Y[b], beta[b], w):
            beta[b] = vb
        converged[b] = ok

    # never return something worse than OLS or the zero vector
    obj = _objective(Z, Y, beta, w)
    for cand in (ols, np.zeros_like(beta)):
        o = _objective(Z, Y, cand, w)
        worse = o < obj
        beta[worse], obj[worse] = cand[worse], o[worse]
    return beta, converged, iters


def _objective(Z, Y, beta, w):
    r = Y - (Z @ beta[..., None])[..., 0]
    return mean_check_loss(w, r)


def _independent_columns(Z):
    _, R, piv = qr(Z, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > d[0] * max(Z.shape) * np.finfo(float).eps)) if d.size and d[0] > 0 else 0
    return np.sort(piv[:max(rank, 1)])


def _initial_basis(Z, r):
    """Rows with the smallest |residual| that span the column space."""
    n, q = Z.shape
    order = np.argsort(np.abs(r), kind="stable")
    head = order[:q]
    if np.linalg.cond(Z[head]) < _COND_MAX:
        return head
    basis = []
    for i in order:
        trial = basis + [i]
        if np.linalg.matrix_rank(Z[trial]) == len(trial):
            basis = trial
            if len(basis) == q:
                return np.array(basis)
    return None


def _descend(Z, y, w, beta, max_pivots):
    """Edge descent on the check loss from a vertex near ``beta``.

    Returns (coefficients, certified optimal, pivots used).
    """
    n, q = Z.shape
    basis = _initial_basis(Z, y - Z @ beta)
    if basis is None:
        return beta, False, 0
    Zh = Z[basis]
    beta = np.linalg.solve(Zh, y[basis])
    for pivot in range(max_pivots + 1):
        r = y - Z @ beta
        r[basis] = 0.0
        nb = np.ones(n, dtype=bool)
        nb[basis] = False
        score = np.where(nb, w - (r < 0), 0.0)
        D = np.linalg.inv(Zh)
        v = -D.T @ (Z.T @ score)
        lo = (w - 1) - v
        hi = v - w
        k_lo, k_hi = int(np.argmax(lo)), int(np.argmax(hi))
        worst = max(lo[k_lo], hi[k_hi])
        if worst <= _DUAL_SLACK:
            return beta, True, pivot
        if pivot == max_pivots:
            break
        if lo[k_lo] >= hi[k_hi]:
            k, sign = k_lo, 1.0
        else:
            k, sign = k_hi, -1.0
        delta = sign * D[:, k]
        a = Z @ delta
        a[basis] = 0.0
        cross = nb & (((a > 0) & (r >= 0)) | ((a < 0) & (r < 0)))
        cand = np.flatnonzero(cross)
        if cand.size == 0:
            break
        t = r[cand] / a[cand]
        order = np.argsort(t, kind="stable")
        slope = -worst + np.cumsum(np.abs(a[cand[order]]))
        stop = int(np.searchsorted(slope >= 0, True))
        if stop >= cand.size:
            break
        enter = cand[order[stop]]
        beta = beta + t[order[stop]] * delta
        basis[k] = enter
        Zh = Z[basis]
        if np.linalg.cond(Zh) >= _COND_MAX:
            break
        beta = np.linalg.solve(Zh, y[basis])
    return beta, False, pivot
