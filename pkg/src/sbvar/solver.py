"""Penalised least squares: soft-thresholding, lasso, and the fused stage-1 fit.

Stage-1 scaling
---------------
``stage1_fit`` takes ``lambda1`` on the normalised scale

    (1/n) ||Y - Z Theta||^2 + lambda1 ||Theta||_1

with ``n`` the number of regression rows. Internally the block updates work
with unnormalised sums, where the same problem reads
``0.5 SSE + tau ||Theta||_1`` with ``tau = n * lambda1 / 2``; ``tau`` is the
threshold that appears in the optimality conditions checked by
``kkt_residuals``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _kernels
from .model import TimeSeries

log = logging.getLogger(__name__)


def soft_threshold(x, lam):
    """Element-wise ``sign(x) * max(|x| - lam, 0)``."""
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    return float(out) if out.ndim == 0 else out


def lagged_design(values: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression form of a VAR(q).

    Row ``l`` (0-based) has response ``y_t`` with ``t = q + 1 + l`` and
    predictors ``(y_{t-1}', ..., y_{t-q}')``.
    """
    values = np.asarray(values, dtype=float)
    T = values.shape[0]
    X = np.hstack([values[q - k - 1 : T - k - 1] for k in range(q)])
    return np.ascontiguousarray(X), np.ascontiguousarray(values[q:])


# ------------------------------------------------------------------ lasso

@dataclass
class LassoFit:
    coefficients: np.ndarray
    residual_sse: float
    l1_norm: float
    iterations: int
    converged: bool


def lasso_gram(G, C, tau, B0=None, tol=1e-10, max_iter=10_000):
    """Minimise ``0.5 tr(B'GB) - tr(B'C) + tau |B|_1`` by coordinate descent."""
    G = np.ascontiguousarray(G, dtype=float)
    C = np.asarray(C, dtype=float)
    B = np.zeros_like(C) if B0 is None else np.array(B0, dtype=float)
    B = np.ascontiguousarray(B)
    g = np.ascontiguousarray(C - G @ B)
    it, chg = _kernels.gram_lasso(G, g, B, tau, tol, max_iter)
    return B, it, chg < tol


def lasso_fit(X, Y, rho, tol=1e-10, max_iter=10_000) -> LassoFit:
    """Multi-response lasso ``(1/N) ||Y - X B||_F^2 + rho |B|_1``.

    Columns of ``Y`` share the design and are solved jointly; each column's
    problem is independent of the others.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if rho < 0:
        raise ValueError("penalty must be nonnegative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite input to lasso_fit")
    N = X.shape[0]
    if N < 1:
        raise ValueError("need at least one row")
    B, it, ok = lasso_gram(X.T @ X, X.T @ Y, N * rho / 2.0, tol=tol, max_iter=max_iter)
    if not ok:
        log.warning("lasso_fit hit the iteration cap (%d)", max_iter)
    resid = Y - X @ B
    return LassoFit(B, float(np.sum(resid**2)), float(np.abs(B).sum()), it, ok)


# ---------------------------------------------------------------- stage 1

@dataclass
class StageOneOptions:
    delta: float = 1e-3
    max_sweeps: int = 100
    zero_tol: float = 1e-8
    update: str = "exact"  # or "closed_form": closed-form G^-1 S(.) block update
    kkt_tol: float | None = 1e-3  # relative to n * lambda1; None disables
    inner_tol: float = 1e-7
    inner_max: int = 500
    active_passes: int = 50
    jitter: float = 1e-4


@dataclass
class StageOneFit:
    """Fused-lasso fit over time.

    ``theta[i]`` is the ``pq x p`` change block at ``block_times[i]``;
    ``theta[0]`` is the initial coefficient block (transposed ``Phi``).
    """

    theta: np.ndarray
    block_times: np.ndarray
    candidate_set: list[int]
    objective_trace: list[float]
    lambda1: float
    lambda2: float
    sweeps: int
    converged: bool
    q: int
    T: int

    @property
    def tau(self) -> float:
        return len(self.block_times) * self.lambda1 / 2.0

    def coefficients_at(self, t: int) -> np.ndarray:
        """``p x pq`` coefficient block in force at time ``t``."""
        k = int(np.searchsorted(self.block_times, t, side="right"))
        if k == 0:
            return self.theta[0].T.copy()
        return self.theta[:k].sum(axis=0).T


def _design_for(series: TimeSeries, exclude_times=None):
    X, Yr = lagged_design(series.values, series.q)
    times = np.arange(series.q + 1, series.T + 1)
    if exclude_times is not None and len(exclude_times):
        keep = ~np.isin(times, np.asarray(exclude_times))
        X, Yr, times = X[keep], Yr[keep], times[keep]
    return np.ascontiguousarray(X), np.ascontiguousarray(Yr), times


def _suffix_grams(X):
    outer = X[:, :, None] * X[:, None, :]
    return np.ascontiguousarray(np.cumsum(outer[::-1], axis=0)[::-1])


def _objective(resid, theta, lambda1, n):
    return float(np.sum(resid**2) / n + lambda1 * np.abs(theta).sum())


def _kkt_violation(R, theta, tau):
    nz = theta != 0.0
    over = np.abs(R) - tau
    ineq = float(np.max(over)) if over.size else 0.0
    eq = float(np.max(np.abs(R[nz] - tau * np.sign(theta[nz])))) if nz.any() else 0.0
    return max(ineq, eq, 0.0)


def stage1_fit(
    series: TimeSeries,
    lambda1: float,
    lambda2: float = 0.0,
    opts: StageOneOptions | None = None,
    exclude_times=None,
    theta0: np.ndarray | None = None,
) -> StageOneFit:
    """Block coordinate descent for the fused-lasso change-point problem.

    Sweeps ``i = 1..n`` minimising over one change block at a time; stops when
    the largest block change in a sweep drops below ``opts.delta`` (and, in
    exact mode, the optimality residual is within ``opts.kkt_tol * n *
    lambda1``). With ``lambda2 > 0`` the converged blocks are soft-thresholded
    at ``lambda2``.

    ``exclude_times`` drops those response times from the loss (their lags
    stay available to later rows); no change block is placed at them.
    """
    opts = opts or StageOneOptions()
    if lambda1 <= 0:
        raise ValueError("lambda1 must be positive")
    if lambda2 < 0:
        raise ValueError("lambda2 must be nonnegative")
    q = series.q
    if series.T <= q + 2:
        raise ValueError(f"need T > q + 2, got T={series.T}, q={q}")

    X, Yr, times = _design_for(series, exclude_times)
    n, d = X.shape
    p = Yr.shape[1]
    tau = n * lambda1 / 2.0
    Gsuf = _suffix_grams(X)
    theta = np.zeros((n, d, p)) if theta0 is None else np.array(theta0, dtype=float)
    theta = np.ascontiguousarray(theta)

    chol_inv = None
    if opts.update == "closed_form":
        chol_inv = np.empty_like(Gsuf)
        eye = np.eye(d)
        for i in range(n):
            tr = np.trace(Gsuf[i])
            if tr <= 0:
                chol_inv[i] = 0.0
                continue
            eps = opts.jitter * tr / d
            factor = linalg.cho_factor(Gsuf[i] + eps * eye)
            chol_inv[i] = linalg.cho_solve(factor, eye)
    elif opts.update != "exact":
        raise ValueError(f"unknown update {opts.update!r}")

    R, resid = _kernels.neg_grad(X, Yr, theta)
    trace = [_objective(resid, theta, lambda1, n)]
    converged = False
    sweeps = 0
    all_idx = np.arange(n)
    for sweeps in range(1, opts.max_sweeps + 1):
        if chol_inv is None:
            chg = _kernels.stage1_sweep(X, Yr, Gsuf, tau, theta, R, all_idx, opts.inner_tol, opts.inner_max)
            # working-set passes: cycle over nonzero blocks only before the next full sweep
            active = np.flatnonzero(np.abs(theta).reshape(n, -1).max(axis=1) > 0)
            for _ in range(opts.active_passes if chg >= opts.delta else 0):
                R, resid = _kernels.neg_grad(X, Yr, theta)
                trace.append(_objective(resid, theta, lambda1, n))
                if _kernels.stage1_sweep(X, Yr, Gsuf, tau, theta, R, active, opts.inner_tol, opts.inner_max) < opts.delta * 1e-2:
                    break
        else:
            chg = _kernels.closed_form_sweep(X, Yr, Gsuf, chol_inv, tau, theta, R)
        R, resid = _kernels.neg_grad(X, Yr, theta)
        trace.append(_objective(resid, theta, lambda1, n))
        if chg < opts.delta:
            if chol_inv is not None or opts.kkt_tol is None:
                converged = True
                break
            if _kkt_violation(R, theta, tau) <= opts.kkt_tol * n * lambda1:
                converged = True
                break
    if not converged:
        log.warning("stage1_fit stopped at the sweep cap (%d)", opts.max_sweeps)

    if lambda2 > 0:
        theta = soft_threshold(theta, lambda2)

    return StageOneFit(
        theta=theta,
        block_times=times,
        candidate_set=_candidates(theta, times, q, series.T, opts.zero_tol),
        objective_trace=trace,
        lambda1=float(lambda1),
        lambda2=float(lambda2),
        sweeps=sweeps,
        converged=converged,
        q=q,
        T=series.T,
    )


def _candidates(theta, times, q, T, zero_tol):
    sup = np.abs(theta).reshape(len(theta), -1).max(axis=1)
    lo, hi = 2 * q + 2, T - q
    return [int(t) for i, t in enumerate(times) if i >= 1 and lo <= t <= hi and sup[i] > zero_tol]


# -------------------------------------------------------------------- KKT

@dataclass
class KKTReport:
    """Optimality residuals of a stage-1 fit, in unnormalised units.

    ``inequality[i] = max|r_i| - tau`` must be ``<= 0``; ``equality[t]`` is
    ``max |r_i - tau sign(theta_i)|`` over the nonzero entries of the block at
    time ``t``.
    """

    tau: float
    inequality: np.ndarray
    equality: dict[int, float] = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        v = max(float(np.max(self.inequality, initial=0.0)), 0.0)
        if self.equality:
            v = max(v, max(self.equality.values()))
        return v


def kkt_residuals(series: TimeSeries, fit: StageOneFit, lambda1: float | None = None,
                  exclude_times=None) -> KKTReport:
    """Evaluate the stage-1 optimality conditions directly from the data.

    The residual correlation of block ``i`` is
    ``r_i = sum_{l >= i} Y_{l-1} (y_l' - Y_{l-1}' sum_{j <= l} theta_j')``.
    """
    lambda1 = fit.lambda1 if lambda1 is None else lambda1
    X, Yr, times = _design_for(series, exclude_times)
    if not np.array_equal(times, fit.block_times):
        raise ValueError("fit was produced on a different row set")
    n = len(times)
    tau = n * lambda1 / 2.0
    # plain numpy on purpose: independent of the solver kernels
    phi = np.cumsum(fit.theta, axis=0)
    resid = Yr - np.einsum("ld,ldp->lp", X, phi)
    R = np.cumsum((X[:, :, None] * resid[:, None, :])[::-1], axis=0)[::-1]
    ineq = np.abs(R).reshape(n, -1).max(axis=1) - tau
    eq = {}
    for i in range(n):
        nz = fit.theta[i] != 0.0
        if nz.any():
            eq[int(times[i])] = float(np.max(np.abs(R[i][nz] - tau * np.sign(fit.theta[i][nz]))))
    return KKTReport(tau=tau, inequality=ineq, equality=eq)
