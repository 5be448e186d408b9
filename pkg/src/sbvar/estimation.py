"""Third stage: trim neighbourhoods of the selected breaks, then fit each
remaining stationary stretch by lasso with a BIC-selected penalty."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import TimeSeries
from .solver import lagged_design, lasso_gram

log = logging.getLogger(__name__)

LOGDET_FLOOR = 1e-8


@dataclass
class StationaryIntervals:
    """Closed observation ranges ``[start, end]`` kept for estimation.

    Within an interval the fitting rows are responses ``t = start + q .. end``
    so every lag stays inside the interval.
    """

    intervals: list[tuple[int, int]]
    radius: int
    q: int

    @property
    def lengths(self) -> list[int]:
        return [e - s for s, e in self.intervals]

    @property
    def total_length(self) -> int:
        return sum(self.lengths)

    def rows(self, j: int) -> np.ndarray:
        s, e = self.intervals[j]
        return np.arange(s + self.q, e + 1)


def stationary_intervals(breaks, radius: int, T: int, q: int) -> StationaryIntervals:
    """Remove ``[t - R, t + R]`` around each break and return what is left.

    Interval ``j`` runs from ``t_{j-1} + R + 1`` to ``t_j - R - 1`` with the
    outer ends pinned at the first and last observation. Intervals too short to hold a fitting
    row are dropped with a warning.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    b = sorted(int(x) for x in breaks)
    starts = [1] + [t + radius + 1 for t in b]
    ends = [t - radius - 1 for t in b] + [T]
    kept = []
    for s, e in zip(starts, ends):
        if e - s <= q + 1:
            log.warning("interval [%d, %d] is too short after trimming; dropped", s, e)
            continue
        kept.append((s, e))
    if not kept:
        raise ValueError(f"radius {radius} leaves no usable interval between breaks {b}")
    return StationaryIntervals(kept, int(radius), q)


@dataclass
class SegmentEstimate:
    interval: tuple[int, int]
    coef: np.ndarray  # p x pq
    resid_cov: np.ndarray
    n_rows: int

    @property
    def support(self) -> np.ndarray:
        return self.coef != 0.0

    def sparse_triplets(self) -> list[tuple[int, int, float]]:
        r, c = np.nonzero(self.coef)
        return [(int(i), int(j), float(self.coef[i, j])) for i, j in zip(r, c)]


@dataclass
class SegmentedModel:
    segments: list[SegmentEstimate]
    rho: float
    q: int
    bic_trace: list[tuple[float, float]] = field(default_factory=list)


class _IntervalData:
    def __init__(self, series: TimeSeries, intervals: StationaryIntervals):
        X, Yr = lagged_design(series.values, series.q)
        first = series.q + 1
        self.blocks = []
        for j in range(len(intervals.intervals)):
            rows = intervals.rows(j) - first
            Xj, Yj = X[rows], Yr[rows]
            self.blocks.append((Xj, Yj, Xj.T @ Xj, Xj.T @ Yj))
        self.N = sum(len(b[0]) for b in self.blocks)


def _fit_blocks(data: _IntervalData, rho: float, warm=None, tol=1e-9):
    tau = data.N * rho / 2.0
    out = []
    for j, (_, _, G, C) in enumerate(data.blocks):
        B0 = None if warm is None else warm[j]
        B, _, ok = lasso_gram(G, C, tau, B0=B0, tol=tol)
        if not ok:
            log.warning("stage-3 lasso on interval %d hit the iteration cap", j)
        out.append(B)
    return out


def _model(data, intervals, coefs, rho, q) -> SegmentedModel:
    segs = []
    for j, ((X, Y, _, _), B) in enumerate(zip(data.blocks, coefs)):
        E = Y - X @ B
        cov = E.T @ E / max(len(E), 1)
        segs.append(SegmentEstimate(intervals.intervals[j], B.T.copy(), (cov + cov.T) / 2, len(E)))
    return SegmentedModel(segs, float(rho), q)


def stage3_fit(series: TimeSeries, intervals: StationaryIntervals, rho: float) -> SegmentedModel:
    """``(1/N) ||Y_r - Z_r B||^2 + rho |B|_1`` over the retained intervals.

    The design is block diagonal, so each interval is an independent lasso;
    ``N`` is the total number of fitting rows and is shared by all blocks.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    data = _IntervalData(series, intervals)
    return _model(data, intervals, _fit_blocks(data, rho), rho, series.q)


def bic(model: SegmentedModel, intervals: StationaryIntervals, mode: str = "diagonal") -> float:
    """Summed per-interval BIC: log det of residual covariance plus
    ``log(len)/len`` per nonzero coefficient.

    ``mode="diagonal"`` uses per-coordinate residual variances (finite even
    when an interval is shorter than ``p``); ``mode="full"`` uses the full
    determinant and is only valid when every interval has more rows than ``p``.
    """
    total = 0.0
    for seg, length in zip(model.segments, intervals.lengths):
        if mode == "diagonal":
            logdet = float(np.sum(np.log(np.diag(seg.resid_cov) + LOGDET_FLOOR)))
        elif mode == "full":
            sign, logdet = np.linalg.slogdet(seg.resid_cov)
            if sign <= 0:
                logdet = -np.inf
        else:
            raise ValueError(f"unknown BIC mode {mode!r}")
        total += logdet + math.log(length) / length * np.count_nonzero(seg.coef)
    return float(total)


def default_rho_grid(intervals: StationaryIntervals, p: int, size: int = 20) -> np.ndarray:
    n_seg = len(intervals.intervals)
    N = sum(len(intervals.rows(j)) for j in range(n_seg))
    anchor = math.sqrt(math.log(n_seg * p * p * intervals.q) / N)
    return np.geomspace(0.1, 10.0, size) * anchor


def select_rho(series: TimeSeries, intervals: StationaryIntervals, rho_grid=None,
               mode: str = "diagonal") -> tuple[float, SegmentedModel, list[tuple[float, float]]]:
    """Grid search for the stage-3 penalty minimising the summed BIC.

    Fits run from the largest penalty down, each warm-started from the last.
    """
    if rho_grid is None:
        rho_grid = default_rho_grid(intervals, series.p)
    grid = sorted((float(r) for r in rho_grid), reverse=True)
    if not grid:
        raise ValueError("rho grid is empty")
    data = _IntervalData(series, intervals)
    trace = []
    best = None
    warm = None
    for rho in grid:
        warm = _fit_blocks(data, rho, warm)
        model = _model(data, intervals, warm, rho, series.q)
        score = bic(model, intervals, mode)
        trace.append((rho, score))
        if best is None or score < best[0]:
            best = (score, model)
    trace.sort()
    model = best[1]
    model.bic_trace = trace
    return model.rho, model, trace
