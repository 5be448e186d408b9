"""Second-stage screening of candidate break points by information criterion."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .model import TimeSeries
from .solver import LassoFit, lagged_design, lasso_gram

log = logging.getLogger(__name__)

EXHAUSTIVE_CAP = 12


class TooManyCandidatesError(ValueError):
    pass


@dataclass
class ScreeningResult:
    selected_breaks: list[int]
    ic_value: float
    ic_trace: list[tuple[int, float]]
    method: str
    eta: float
    omega: float


@dataclass
class SegmentFit(LassoFit):
    start: int = 0
    end: int = 0  # exclusive response time
    short: bool = False


class SegmentEvaluator:
    """Penalised per-segment VAR fits with caching.

    A segment ``[s, e)`` uses the response rows ``t = s .. e-1`` and minimises
    ``(1/(e - s)) SSE + eta |theta|_1``. Fits are cached by ``(s, e)`` so
    that repeated criterion evaluations over overlapping subsets reuse them.
    """

    def __init__(self, series: TimeSeries, eta: float, tol: float = 1e-9, max_iter: int = 10_000):
        self.series = series
        self.eta = float(eta)
        self.tol = tol
        self.max_iter = max_iter
        X, Yr = lagged_design(series.values, series.q)
        self._first = series.q + 1
        d, p = X.shape[1], Yr.shape[1]
        # prefix sums of X'X, X'Y and Y'Y over rows
        self._gxx = np.zeros((len(X) + 1, d, d))
        self._gxy = np.zeros((len(X) + 1, d, p))
        self._yy = np.zeros(len(X) + 1)
        np.cumsum(X[:, :, None] * X[:, None, :], axis=0, out=self._gxx[1:])
        np.cumsum(X[:, :, None] * Yr[:, None, :], axis=0, out=self._gxy[1:])
        np.cumsum(np.sum(Yr**2, axis=1), out=self._yy[1:])
        self._cache: dict[tuple[int, int], SegmentFit] = {}

    @property
    def edges(self) -> tuple[int, int]:
        return self._first, self.series.T + 1

    def segment(self, start: int, end: int) -> SegmentFit:
        key = (start, end)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if end <= start:
            raise ValueError(f"segments must be non-empty, got [{start}, {end})")
        a, b = start - self._first, end - self._first
        G = self._gxx[b] - self._gxx[a]
        C = self._gxy[b] - self._gxy[a]
        length = end - start
        B, it, ok = lasso_gram(G, C, length * self.eta / 2.0, tol=self.tol, max_iter=self.max_iter)
        yy = self._yy[b] - self._yy[a]
        sse = float(max(yy - 2.0 * np.sum(B * C) + np.sum(B * (G @ B)), 0.0))
        fit = SegmentFit(B, sse, float(np.abs(B).sum()), it, ok, start, end, length < self.series.q + 1)
        self._cache[key] = fit
        return fit

    def fits(self, breaks) -> list[SegmentFit]:
        lo, hi = self.edges
        edges = [lo, *breaks, hi]
        return [self.segment(s, e) for s, e in zip(edges, edges[1:])]

    def ln_objective(self, breaks) -> float:
        return float(sum(f.residual_sse + self.eta * f.l1_norm for f in self.fits(breaks)))

    def ic(self, breaks, omega: float) -> float:
        return self.ln_objective(breaks) + len(breaks) * omega


def _check_breaks(series: TimeSeries, breaks) -> list[int]:
    b = [int(x) for x in breaks]
    if any(y <= x for x, y in zip(b, b[1:])):
        raise ValueError(f"segments must be non-empty: breaks {b} are not strictly increasing")
    if b and (b[0] <= series.q + 1 or b[-1] > series.T):
        raise ValueError(f"breaks must lie in ({series.q + 1}, {series.T}], got {b}")
    return b


def segment_fit(series: TimeSeries, breaks, eta: float) -> list[SegmentFit]:
    """Independent penalised fits on the segments delimited by ``breaks``."""
    b = _check_breaks(series, breaks)
    fits = SegmentEvaluator(series, eta).fits(b)
    for f in fits:
        if f.short:
            log.warning("segment [%d, %d) is shorter than q + 1 rows", f.start, f.end)
    return fits


def ln_objective(series: TimeSeries, breaks, eta: float) -> float:
    """Unnormalised SSE plus ``eta``-weighted l1 norms, summed over segments."""
    return SegmentEvaluator(series, eta).ln_objective(_check_breaks(series, breaks))


def information_criterion(series: TimeSeries, breaks, eta: float, omega: float) -> float:
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    return SegmentEvaluator(series, eta).ic(_check_breaks(series, breaks), omega)


def screen_exhaustive(series, candidates, eta, omega, cap=EXHAUSTIVE_CAP,
                      evaluator: SegmentEvaluator | None = None) -> ScreeningResult:
    """Global minimiser of the criterion over every subset of ``candidates``."""
    cands = _check_breaks(series, sorted(candidates))
    if len(cands) > cap:
        raise TooManyCandidatesError(
            f"{len(cands)} candidates exceed the exhaustive cap of {cap}; use screen_bea"
        )
    ev = evaluator or SegmentEvaluator(series, eta)
    best: tuple[float, list[int]] = (np.inf, [])
    trace = []
    for m in range(len(cands) + 1):
        best_m = np.inf
        for sub in itertools.combinations(cands, m):
            v = ev.ic(sub, omega)
            best_m = min(best_m, v)
            if v < best[0]:
                best = (v, list(sub))
        trace.append((m, float(best_m)))
    return ScreeningResult(best[1], float(best[0]), trace, "exhaustive", float(eta), float(omega))


def screen_bea(series, candidates, eta, omega,
               evaluator: SegmentEvaluator | None = None) -> ScreeningResult:
    """Backward elimination: drop the point whose removal lowers IC most.

    Stops as soon as every single removal would raise the criterion. Ties go
    to the earlier candidate.
    """
    s = _check_breaks(series, sorted(candidates))
    ev = evaluator or SegmentEvaluator(series, eta)
    w_star = ev.ic(s, omega)
    trace = [(len(s), float(w_star))]
    while s:
        scores = [ev.ic(s[:i] + s[i + 1 :], omega) for i in range(len(s))]
        j = int(np.argmin(scores))  # first minimiser
        if scores[j] > w_star:
            break
        s = s[:j] + s[j + 1 :]
        w_star = scores[j]
        trace.append((len(s), float(w_star)))
    return ScreeningResult(s, float(w_star), trace, "bea", float(eta), float(omega))
