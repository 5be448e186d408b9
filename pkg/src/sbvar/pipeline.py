"""End-to-end three-stage detection and estimation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import SegmentedModel, StationaryIntervals, select_rho, stationary_intervals
from .model import TimeSeries
from .screening import EXHAUSTIVE_CAP, ScreeningResult, SegmentEvaluator, screen_bea, screen_exhaustive
from .solver import StageOneFit, StageOneOptions, stage1_fit
from .tuning import CVResult, TuningPlan, cv_lambda1, default_plan

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        super().__init__(f"[{stage}] {exc}")


@dataclass
class DetectionResult:
    plan: TuningPlan
    scale: float
    stage1: StageOneFit | None
    cv: CVResult | None
    screening: ScreeningResult | None
    intervals: StationaryIntervals | None
    model: SegmentedModel | None
    timings: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    breaks: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def global_scale(values: np.ndarray) -> float:
    """Root mean of the per-series variances; 1 for a constant series."""
    s = float(np.sqrt(np.mean(np.var(values, axis=0))))
    return s if s > 0 else 1.0


# stage-1 sweep cap used by the pipeline; the solver default is lower
PIPELINE_MAX_SWEEPS = 1000


def detect(
    series: TimeSeries,
    plan: TuningPlan | None = None,
    screen: str = "bea",
    scale_to: float | None = 0.4,
    known_breaks=None,
    rho_grid=None,
    stage1_opts: StageOneOptions | None = None,
    bic_mode: str = "diagonal",
) -> DetectionResult:
    """Run candidate search, screening and trimmed estimation.

    The series is divided by one global scale factor before fitting, which
    leaves VAR coefficients unchanged; residual covariances are reported in
    the original units. ``known_breaks`` skips the first two stages.

    Failures in stages 1 and 2 raise ``StageError``. A stage-3 failure (for
    example a trimming radius that leaves no usable interval) is recorded in
    ``errors`` and the detected breaks are still returned.
    """
    plan = plan or default_plan(series.T, series.p, series.q)
    stage1_opts = stage1_opts or StageOneOptions(max_sweeps=PIPELINE_MAX_SWEEPS)
    scale = global_scale(series.values) / scale_to if scale_to else 1.0
    work = TimeSeries(series.values / scale, q=series.q)
    timings: dict[str, float] = {}
    fit = cv = screening = None

    if known_breaks is None:
        t0 = time.perf_counter()
        try:
            lam = plan.lambda1
            if lam is None:
                cv = cv_lambda1(work, plan.lambda1_grid, plan.cv_spacing, plan.cv_seed, stage1_opts)
                lam = cv.lambda1
                plan = replace(plan, lambda1=lam)
            fit = stage1_fit(work, lam, plan.lambda2, stage1_opts)
        except Exception as exc:
            raise StageError("stage1", exc) from exc
        timings["stage1"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        try:
            ev = SegmentEvaluator(work, plan.eta)
            method = screen
            if screen == "exhaustive" and len(fit.candidate_set) > EXHAUSTIVE_CAP:
                log.warning("%d candidates exceed the exhaustive cap; using BEA", len(fit.candidate_set))
                method = "bea"
            if method == "exhaustive":
                screening = screen_exhaustive(work, fit.candidate_set, plan.eta, plan.omega, evaluator=ev)
            elif method == "bea":
                screening = screen_bea(work, fit.candidate_set, plan.eta, plan.omega, evaluator=ev)
            else:
                raise ValueError(f"unknown screening method {screen!r}")
        except Exception as exc:
            raise StageError("screening", exc) from exc
        timings["screening"] = time.perf_counter() - t0
        breaks = screening.selected_breaks
    else:
        breaks = sorted(int(b) for b in known_breaks)

    t0 = time.perf_counter()
    intervals = model = None
    errors = {}
    try:
        intervals = stationary_intervals(breaks, plan.radius, series.T, series.q)
        _, model, _ = select_rho(work, intervals, rho_grid, bic_mode)
        for seg in model.segments:
            seg.resid_cov = seg.resid_cov * scale**2
    except Exception as exc:
        log.error("estimation failed: %s", exc)
        errors["estimation"] = str(exc)
    timings["estimation"] = time.perf_counter() - t0
    return DetectionResult(plan, scale, fit, cv, screening, intervals, model, timings, errors, breaks)
