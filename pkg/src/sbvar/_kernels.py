"""Coordinate-descent kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``SBVAR_DISABLE_NUMBA`` is
unset (or ``0``). Both paths run the same update sequence, so they agree to
round-off; ``set_backend`` switches at runtime for tests and benchmarks.

Conventions shared by every kernel: a Gram matrix ``G`` (``d x d``), a
coefficient matrix ``B`` (``d x p``) and the negative gradient
``g = C - G B`` of ``0.5 tr(B'GB) - tr(B'C)``. The penalty is ``tau * |B|_1``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_DISABLED = os.environ.get("SBVAR_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
BACKEND = "numba" if (numba is not None and not _DISABLED) else "numpy"


def set_backend(name: str) -> None:
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    BACKEND = name


def get_backend() -> str:
    return BACKEND


# ------------------------------------------------------------------ numpy

def _gram_lasso_np(G, g, B, tau, tol, max_iter):
    d = G.shape[0]
    diag = np.diag(G).copy()
    it = 0
    maxchg = np.inf
    while it < max_iter:
        it += 1
        maxchg = 0.0
        for a in range(d):
            gaa = diag[a]
            if gaa <= 0.0:
                continue
            z = gaa * B[a] + g[a]
            new = np.sign(z) * np.maximum(np.abs(z) - tau, 0.0) / gaa
            diff = new - B[a]
            if np.any(diff != 0.0):
                g -= np.outer(G[:, a], diff)
                B[a] = new
                m = np.max(np.abs(diff))
                if m > maxchg:
                    maxchg = m
        if maxchg < tol:
            break
    return it, maxchg


def _neg_grad_np(X, Yr, theta):
    """Suffix sums of ``X_l e_l'`` for every block (``n x d x p``)."""
    phi = np.cumsum(theta, axis=0)
    resid = Yr - np.einsum("ld,ldp->lp", X, phi)
    contrib = X[:, :, None] * resid[:, None, :]
    return np.cumsum(contrib[::-1], axis=0)[::-1].copy(), resid


def _stage1_sweep_np(X, Yr, Gsuf, tau, theta, R, idx, inner_tol, inner_max):
    n, d = X.shape
    p = Yr.shape[1]
    acc = np.zeros((d, p))
    acc_live = False
    maxchg = 0.0
    for i in idx:
        g = R[i] - Gsuf[i] @ acc if acc_live else R[i].copy()
        Bi = theta[i]
        if not np.any(Bi) and np.max(np.abs(g)) <= tau:
            continue
        old = Bi.copy()
        _gram_lasso_np(Gsuf[i], g, Bi, tau, inner_tol, inner_max)
        diff = Bi - old
        m = np.max(np.abs(diff))
        if m > 0.0:
            acc += diff
            acc_live = True
            maxchg = max(maxchg, m)
    return maxchg


def _closed_form_sweep_np(X, Yr, Gsuf, chol_inv, tau, theta, R):
    n, d = X.shape
    p = Yr.shape[1]
    acc = np.zeros((d, p))
    acc_live = False
    maxchg = 0.0
    for i in range(n):
        g = R[i] - Gsuf[i] @ acc if acc_live else R[i].copy()
        u = g + Gsuf[i] @ theta[i]
        s = np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)
        new = chol_inv[i] @ s
        diff = new - theta[i]
        m = np.max(np.abs(diff))
        if m > 0.0:
            theta[i] = new
            acc += diff
            acc_live = True
            maxchg = max(maxchg, m)
    return maxchg


# ------------------------------------------------------------------ numba

if numba is not None:

    @numba.njit(cache=True)
    def _gram_lasso_nb(G, g, B, tau, tol, max_iter):
        d = G.shape[0]
        p = B.shape[1]
        it = 0
        maxchg = np.inf
        while it < max_iter:
            it += 1
            maxchg = 0.0
            for a in range(d):
                gaa = G[a, a]
                if gaa <= 0.0:
                    continue
                for k in range(p):
                    z = gaa * B[a, k] + g[a, k]
                    az = abs(z) - tau
                    if az > 0.0:
                        new = (az if z > 0.0 else -az) / gaa
                    else:
                        new = 0.0
                    diff = new - B[a, k]
                    if diff != 0.0:
                        for b in range(d):
                            g[b, k] -= G[b, a] * diff
                        B[a, k] = new
                        if abs(diff) > maxchg:
                            maxchg = abs(diff)
            if maxchg < tol:
                break
        return it, maxchg

    @numba.njit(cache=True)
    def _neg_grad_nb(X, Yr, theta):
        n, d = X.shape
        p = Yr.shape[1]
        phi = np.zeros((d, p))
        resid = np.empty((n, p))
        for l in range(n):
            phi += theta[l]
            for k in range(p):
                s = Yr[l, k]
                for a in range(d):
                    s -= X[l, a] * phi[a, k]
                resid[l, k] = s
        R = np.empty((n, d, p))
        run = np.zeros((d, p))
        for l in range(n - 1, -1, -1):
            for a in range(d):
                xa = X[l, a]
                for k in range(p):
                    run[a, k] += xa * resid[l, k]
            R[l] = run
        return R, resid

    @numba.njit(cache=True)
    def _stage1_sweep_nb(X, Yr, Gsuf, tau, theta, R, idx, inner_tol, inner_max):
        n, d = X.shape
        p = Yr.shape[1]
        acc = np.zeros((d, p))
        acc_live = False
        maxchg = 0.0
        old = np.empty((d, p))
        for i in idx:
            if acc_live:
                g = R[i] - Gsuf[i] @ acc
            else:
                g = R[i].copy()
            Bi = theta[i]
            zero_block = True
            for a in range(d):
                for k in range(p):
                    if Bi[a, k] != 0.0:
                        zero_block = False
            if zero_block:
                big = 0.0
                for a in range(d):
                    for k in range(p):
                        if abs(g[a, k]) > big:
                            big = abs(g[a, k])
                if big <= tau:
                    continue
            old[:, :] = Bi
            _gram_lasso_nb(Gsuf[i], g, Bi, tau, inner_tol, inner_max)
            m = 0.0
            for a in range(d):
                for k in range(p):
                    diff = Bi[a, k] - old[a, k]
                    acc[a, k] += diff
                    if abs(diff) > m:
                        m = abs(diff)
            if m > 0.0:
                acc_live = True
                if m > maxchg:
                    maxchg = m
        return maxchg

    @numba.njit(cache=True)
    def _closed_form_sweep_nb(X, Yr, Gsuf, chol_inv, tau, theta, R):
        n, d = X.shape
        p = Yr.shape[1]
        acc = np.zeros((d, p))
        acc_live = False
        maxchg = 0.0
        for i in range(n):
            if acc_live:
                g = R[i] - Gsuf[i] @ acc
            else:
                g = R[i].copy()
            u = g + Gsuf[i] @ theta[i]
            for a in range(d):
                for k in range(p):
                    z = u[a, k]
                    az = abs(z) - tau
                    u[a, k] = (az if z > 0.0 else -az) if az > 0.0 else 0.0
            new = chol_inv[i] @ u
            m = 0.0
            for a in range(d):
                for k in range(p):
                    diff = new[a, k] - theta[i, a, k]
                    acc[a, k] += diff
                    if abs(diff) > m:
                        m = abs(diff)
            if m > 0.0:
                theta[i] = new
                acc_live = True
                if m > maxchg:
                    maxchg = m
        return maxchg


# ---------------------------------------------------------------- dispatch

def gram_lasso(G, g, B, tau, tol, max_iter):
    """Cyclic coordinate descent on ``0.5 tr(B'GB) - tr(B'C) + tau |B|_1``.

    ``B`` and ``g`` are updated in place. Returns ``(sweeps, last_max_change)``.
    """
    if BACKEND == "numba":
        it, chg = _gram_lasso_nb(G, g, B, float(tau), float(tol), int(max_iter))
    else:
        it, chg = _gram_lasso_np(G, g, B, float(tau), float(tol), int(max_iter))
    return int(it), float(chg)


def neg_grad(X, Yr, theta):
    if BACKEND == "numba":
        return _neg_grad_nb(X, Yr, theta)
    return _neg_grad_np(X, Yr, theta)


def stage1_sweep(X, Yr, Gsuf, tau, theta, R, idx, inner_tol, inner_max):
    """One forward pass of exact block minimisation over the sorted blocks ``idx``.

    ``R`` must hold the negative block gradients at the current ``theta``.
    """
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if BACKEND == "numba":
        return float(_stage1_sweep_nb(X, Yr, Gsuf, float(tau), theta, R, idx, float(inner_tol), int(inner_max)))
    return float(_stage1_sweep_np(X, Yr, Gsuf, float(tau), theta, R, idx, float(inner_tol), int(inner_max)))


def closed_form_sweep(X, Yr, Gsuf, chol_inv, tau, theta, R):
    """One forward pass of the closed-form ``G^-1 S(.)`` block update."""
    if BACKEND == "numba":
        return float(_closed_form_sweep_nb(X, Yr, Gsuf, chol_inv, float(tau), theta, R))
    return float(_closed_form_sweep_np(X, Yr, Gsuf, chol_inv, float(tau), theta, R))
