"""Detection and estimation accuracy measures."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimation import SegmentedModel
from .model import PiecewiseVarSpec


def hausdorff(A, B) -> float:
    """``max_{b in B} min_{a in A} |b - a|``.

    Not symmetric. An empty ``A`` gives ``inf``; an empty ``B`` gives 0.
    """
    A = np.asarray(list(A), dtype=float)
    B = np.asarray(list(B), dtype=float)
    if B.size == 0:
        return 0.0
    if A.size == 0:
        return math.inf
    return float(np.max(np.min(np.abs(B[:, None] - A[None, :]), axis=1)))


def selection_cells(truth, T: int) -> list[tuple[float, float]]:
    """Half-open cells ``[lo, hi)`` splitting ``[0, T]`` at midpoints between
    consecutive true breaks. The last cell is closed at ``T``."""
    t = sorted(truth)
    mids = [0.0] + [0.5 * (a + b) for a, b in zip(t, t[1:])] + [float(T)]
    return list(zip(mids, mids[1:]))


def _cell_of(x: float, cells) -> int | None:
    for j, (lo, hi) in enumerate(cells):
        if lo <= x < hi or (j == len(cells) - 1 and x == hi):
            return j
    return None


def matched_locations(est, truth, T: int) -> list[list[int]]:
    """Estimated points falling in each true break's cell."""
    cells = selection_cells(truth, T)
    out: list[list[int]] = [[] for _ in cells]
    for x in est:
        j = _cell_of(float(x), cells)
        if j is not None:
            out[j].append(int(x))
    return out


def selection_rate(est, truth, T: int) -> list[bool]:
    """Per true break: does some estimated point fall in its cell."""
    if not truth:
        return []
    return [bool(m) for m in matched_locations(est, truth, T)]


def rn_selection(est, truth, radius: int) -> list[bool]:
    """Per true break: does some estimated point lie within ``radius`` of it."""
    return [any(abs(int(x) - t) <= radius for x in est) for t in truth]


# ------------------------------------------------------------- estimation

def _overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]) + 1)


def match_segments(model: SegmentedModel, truth: PiecewiseVarSpec) -> list[tuple[int, int]]:
    """Pair each estimated segment with the true segment it overlaps most.

    Ties go to the earlier true segment. Returns ``(estimated, true)`` index pairs.
    """
    bounds = [(s, e - 1) for s, e in truth.segment_bounds()]
    pairs = []
    for i, seg in enumerate(model.segments):
        ov = [_overlap(seg.interval, b) for b in bounds]
        pairs.append((i, int(np.argmax(ov))))  # argmax keeps the first maximiser
    return pairs


def _true_block(truth: PiecewiseVarSpec, j: int) -> np.ndarray:
    return truth.segment_coeffs[j]


def ree(model: SegmentedModel, truth: PiecewiseVarSpec) -> float:
    """Summed Frobenius errors over summed true Frobenius norms, on matched pairs."""
    num = den = 0.0
    for i, j in match_segments(model, truth):
        phi = _true_block(truth, j)
        num += float(np.linalg.norm(model.segments[i].coef - phi))
        den += float(np.linalg.norm(phi))
    if den == 0.0:
        raise ValueError("true coefficients have zero norm; REE is undefined")
    return num / den


def support_rates(model: SegmentedModel, truth: PiecewiseVarSpec, threshold: float = 0.0) -> tuple[float, float]:
    """True and false positive rates of the estimated nonzero pattern.

    Entries of the estimate with ``|value| <= threshold`` count as zero. TPR is
    ``nan`` when the true support is empty, FPR when it is full.
    """
    tp = fp = n_true = n_total = 0
    for i, j in match_segments(model, truth):
        est = np.abs(model.segments[i].coef) > threshold
        sup = _true_block(truth, j) != 0.0
        tp += int(np.sum(est & sup))
        fp += int(np.sum(est & ~sup))
        n_true += int(sup.sum())
        n_total += sup.size
    tpr = tp / n_true if n_true else math.nan
    fpr = fp / (n_total - n_true) if n_total > n_true else math.nan
    return tpr, fpr


# ---------------------------------------------------------------- reports

@dataclass
class BreakSummary:
    true_break: int
    mean_location: float
    std_location: float
    selection_rate: float
    rn_selection_rate: float


@dataclass
class DetectionReport:
    """Aggregate over replicates.

    Locations are relative (``t / T``); mean and std use successful matches
    only, taking the closest estimated point in the break's cell.
    """

    breaks: list[BreakSummary]
    hausdorff: float
    replicates: int
    failures: int = 0


@dataclass
class EstimationReport:
    ree_mean: float
    ree_std: float
    tpr: float
    fpr: float
    replicates: int
    mismatched: int = 0


@dataclass
class ReplicateRecord:
    """One row of the flat per-replicate export."""

    seed: int
    breaks: list[int]
    hausdorff: float
    ree: float = math.nan
    tpr: float = math.nan
    fpr: float = math.nan
    ok: bool = True
    error: str = ""
    timings: dict[str, float] = field(default_factory=dict)


def detection_report(estimates, truth, T: int, radius: int, failures: int = 0) -> DetectionReport:
    """Summarise detection over replicates; ``estimates`` is a list of break lists."""
    rows = []
    hd = []
    for t_idx, t in enumerate(truth):
        locs, hits, rn_hits = [], 0, 0
        for est in estimates:
            cell = matched_locations(est, truth, T)[t_idx]
            if cell:
                hits += 1
                locs.append(min(cell, key=lambda x: (abs(x - t), x)) / T)
            rn_hits += rn_selection(est, [t], radius)[0]
        k = max(len(estimates), 1)
        rows.append(BreakSummary(
            int(t),
            float(np.mean(locs)) if locs else math.nan,
            float(np.std(locs, ddof=1)) if len(locs) > 1 else math.nan,
            hits / k,
            rn_hits / k,
        ))
    for est in estimates:
        hd.append(hausdorff(est, truth))
    finite = [h for h in hd if math.isfinite(h)]
    mean_hd = float(np.mean(finite)) if len(finite) == len(hd) and hd else math.inf if hd else math.nan
    return DetectionReport(rows, mean_hd, len(estimates), failures)


def estimation_report(rees, rates, mismatched: int = 0) -> EstimationReport:
    rees = [r for r in rees if math.isfinite(r)]
    tprs = [t for t, _ in rates if math.isfinite(t)]
    fprs = [f for _, f in rates if math.isfinite(f)]
    return EstimationReport(
        float(np.mean(rees)) if rees else math.nan,
        float(np.std(rees, ddof=1)) if len(rees) > 1 else math.nan,
        float(np.mean(tprs)) if tprs else math.nan,
        float(np.mean(fprs)) if fprs else math.nan,
        len(rees),
        mismatched,
    )


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def report_to_json(report, path=None) -> str:
    text = json.dumps(_clean(asdict(report)), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def records_to_csv(records: list[ReplicateRecord], path) -> None:
    """Flat CSV, one row per replicate; breaks are ``;``-joined."""
    cols = ["seed", "ok", "breaks", "hausdorff", "ree", "tpr", "fpr", "error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            w.writerow([r.seed, int(r.ok), ";".join(map(str, r.breaks)), r.hausdorff,
                        r.ree, r.tpr, r.fpr, r.error])
