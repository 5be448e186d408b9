"""Finite-sample tuning rules for the three stages.

All logarithms are natural. ``n = T - q + 1``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import TimeSeries
from .solver import StageOneOptions, stage1_fit

log = logging.getLogger(__name__)

TINY = 1e-12


@dataclass
class TuningPlan:
    lambda1: float | None = None
    lambda1_grid: list[float] = field(default_factory=list)
    lambda2: float = 0.0
    eta: float = 0.0
    omega: float = 0.0
    omega_constant: float = 0.5
    radius: int = 0
    cv_spacing: int = 20
    cv_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TuningPlan:
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def lambda1_anchor(T: int, p: int, q: int) -> float:
    """``2 sqrt((log n + 2 log p + log q) / n)``."""
    n = T - q + 1
    return 2.0 * math.sqrt((math.log(n) + 2.0 * math.log(p) + math.log(q)) / n)


def default_lambda1_grid(T: int, p: int, q: int, size: int = 15) -> list[float]:
    return list(np.geomspace(0.1, 10.0, size) * lambda1_anchor(T, p, q))


def default_plan(T: int, p: int, q: int, omega_constant: float = 0.5) -> TuningPlan:
    """``eta = log n log p / n``, ``omega = C (log n log p)^{3/2}``, ``R = round(omega)``."""
    if T <= q:
        raise ValueError("need T > q")
    if p < 1:
        raise ValueError("need p >= 1")
    if not 0.0 <= omega_constant <= 1.0:
        warnings.warn(f"omega constant {omega_constant} is outside [0, 1]", stacklevel=2)
    n = T - q + 1
    rate = math.log(n) * math.log(p)
    eta = rate / n
    if eta <= 0:
        warnings.warn("eta is zero for p = 1; clamped to a tiny positive value", stacklevel=2)
        eta = TINY
    omega = omega_constant * rate**1.5
    return TuningPlan(
        lambda1=None,
        lambda1_grid=default_lambda1_grid(T, p, q),
        lambda2=0.0,
        eta=eta,
        omega=omega,
        omega_constant=omega_constant,
        radius=int(round(omega)),
    )


def holdout_times(T: int, q: int, spacing: int, seed: int) -> np.ndarray:
    """Every ``spacing``-th response time from a seeded random offset."""
    if spacing < 2:
        raise ValueError("hold-out spacing must be at least 2")
    rng = np.random.default_rng(seed)
    first = q + 1 + int(rng.integers(0, spacing))
    return np.arange(first, T + 1, spacing)


@dataclass
class CVResult:
    lambda1: float
    trace: list[tuple[float, float]]
    holdout: list[int]


def cv_lambda1(series: TimeSeries, grid, hold_spacing: int = 20, seed: int = 0,
               opts: StageOneOptions | None = None) -> CVResult:
    """Pick ``lambda1`` by one-step prediction error on held-out time points.

    Held-out responses are removed from the stage-1 loss; each is then
    predicted from its observed lags with the coefficient block the fit
    assigns to that time. Fits run from large to small ``lambda1`` with warm
    starts.
    """
    grid = sorted((float(g) for g in grid), reverse=True)
    if not grid:
        raise ValueError("lambda1 grid is empty")
    if len(grid) == 1:
        return CVResult(grid[0], [(grid[0], float("nan"))], [])
    y, q = series.values, series.q
    held = holdout_times(series.T, q, hold_spacing, seed)
    lags = {int(t): y[t - q - 1 : t - 1][::-1].reshape(-1) for t in held}
    trace = []
    warm = None
    for lam in grid:
        try:
            fit = stage1_fit(series, lam, 0.0, opts, exclude_times=held, theta0=warm)
        except Exception as exc:  # excluded from the search, not fatal
            warnings.warn(f"cv fit at lambda1={lam:.4g} failed: {exc}", stacklevel=2)
            continue
        warm = fit.theta
        err = 0.0
        for t in held:
            pred = fit.coefficients_at(int(t)) @ lags[int(t)]
            err += float(np.sum((y[t - 1] - pred) ** 2))
        trace.append((lam, err / len(held)))
    if not trace:
        raise RuntimeError("every cross-validation fit failed")
    best = min(trace, key=lambda kv: kv[1])
    trace.sort()
    return CVResult(best[0], trace, [int(t) for t in held])
