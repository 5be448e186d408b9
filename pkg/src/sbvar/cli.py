"""Command-line entry point: ``sbvar simulate | detect | benchmark``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics
from .model import TimeSeries, builtin_scenario, load_spec, read_csv, save_spec, simulate, write_csv
from .pipeline import DetectionResult, StageError, detect
from .tuning import TuningPlan, default_plan

SCHEMA_VERSION = 1
log = logging.getLogger("sbvar")


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str | None) -> list[int] | None:
    if text is None:
        return None
    return [int(v) for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    input: str | None = None
    scenario: int | None = None
    spec: str | None = None
    seed: int = 1
    q: int = 1
    lambda1: float | None = None
    lambda1_grid: list[float] | None = None
    lambda2: float | None = None
    eta: float | None = None
    omega_c: float = 0.5
    rn: int | None = None
    screen: str = "bea"
    rho_grid: list[float] | None = None
    scale_to: float | None = 0.4
    diff: int = 0
    breaks_known: list[int] | None = None
    delimiter: str = ","
    reps: int = 1
    jobs: int = 1
    baseline_breaks: str | None = None
    out: str | None = None

    def check(self, need_source: bool = True) -> None:
        sources = sum(x is not None for x in (self.input, self.scenario, self.spec))
        if need_source and sources != 1:
            raise ValueError("give exactly one of --input, --scenario or --spec")
        if self.reps < 1:
            raise ValueError("--reps must be at least 1")
        if self.jobs < 1:
            raise ValueError("--jobs must be at least 1")

    def plan_for(self, T: int, p: int) -> TuningPlan:
        plan = default_plan(T, p, self.q, self.omega_c)
        if self.lambda1_grid is not None:
            plan = replace(plan, lambda1_grid=list(self.lambda1_grid))
        if self.lambda1 is not None:
            plan = replace(plan, lambda1=self.lambda1)
        if self.lambda2 is not None:
            plan = replace(plan, lambda2=self.lambda2)
        if self.eta is not None:
            plan = replace(plan, eta=self.eta)
        if self.rn is not None:
            plan = replace(plan, radius=self.rn)
        return plan


def _load_series(cfg: RunConfig) -> TimeSeries:
    if cfg.input is not None:
        series = read_csv(cfg.input, q=cfg.q, delimiter=cfg.delimiter)
    else:
        spec = load_spec(cfg.spec) if cfg.spec else builtin_scenario(cfg.scenario)
        series = simulate(spec, cfg.seed)
        series = TimeSeries(series.values, q=cfg.q)
    if cfg.diff:
        values = np.diff(series.values, n=cfg.diff, axis=0)
        series = TimeSeries(values, q=cfg.q)
    return series


# ---------------------------------------------------------------- export

def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def result_to_dict(res: DetectionResult) -> dict:
    """Plain-JSON view of a pipeline run."""
    out = {
        "schema_version": SCHEMA_VERSION,
        "plan": res.plan.to_dict(),
        "scale": res.scale,
        "candidates": None,
        "stage1": None,
        "cv": None,
        "screening": None,
        "selected_breaks": list(res.breaks),
        "intervals": None,
        "model": None,
        "errors": dict(res.errors),
        "timings": {k: round(v, 6) for k, v in res.timings.items()},
    }
    if res.stage1 is not None:
        out["candidates"] = list(res.stage1.candidate_set)
        out["stage1"] = {
            "lambda1": res.stage1.lambda1,
            "lambda2": res.stage1.lambda2,
            "sweeps": res.stage1.sweeps,
            "converged": res.stage1.converged,
            "objective": res.stage1.objective_trace[-1],
        }
    if res.cv is not None:
        out["cv"] = {"lambda1": res.cv.lambda1, "trace": [list(x) for x in res.cv.trace],
                     "holdout": res.cv.holdout}
    if res.screening is not None:
        s = res.screening
        out["screening"] = {
            "method": s.method,
            "selected_breaks": list(s.selected_breaks),
            "ic_value": s.ic_value,
            "ic_trace": [list(x) for x in s.ic_trace],
            "eta": s.eta,
            "omega": s.omega,
        }
    if res.intervals is not None:
        iv = res.intervals
        out["intervals"] = {
            "radius": iv.radius,
            "intervals": [list(x) for x in iv.intervals],
            "lengths": iv.lengths,
            "total_length": iv.total_length,
        }
    if res.model is not None:
        m = res.model
        out["model"] = {
            "rho": m.rho,
            "q": m.q,
            "bic_trace": [[r, _finite(b)] for r, b in m.bic_trace],
            "segments": [
                {
                    "interval": list(seg.interval),
                    "n_rows": seg.n_rows,
                    "coef": seg.coef.tolist(),
                    "nonzeros": [list(t) for t in seg.sparse_triplets()],
                    "resid_var": np.diag(seg.resid_cov).tolist(),
                }
                for seg in m.segments
            ],
        }
    return out


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


# -------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.scenario is None and cfg.spec is None:
        raise ValueError("simulate needs --scenario or --spec")
    spec = load_spec(cfg.spec) if cfg.spec else builtin_scenario(cfg.scenario)
    series = simulate(spec, cfg.seed)
    out = Path(cfg.out or f"scenario{cfg.scenario or 'x'}_seed{cfg.seed}.csv")
    write_csv(series, out)
    save_spec(spec, out.with_suffix(".spec.json"))
    log.info("wrote %s (%d x %d)", out, series.T, series.p)
    return 0


def cmd_detect(cfg: RunConfig) -> int:
    series = _load_series(cfg)
    plan = cfg.plan_for(series.T, series.p)
    try:
        res = detect(series, plan, screen=cfg.screen, scale_to=cfg.scale_to,
                     known_breaks=cfg.breaks_known, rho_grid=cfg.rho_grid)
    except StageError as exc:
        log.error("%s", exc)
        _write_json({"schema_version": SCHEMA_VERSION, "errors": {exc.stage: str(exc)}}, cfg.out)
        return 2
    _write_json(result_to_dict(res), cfg.out)
    for stage, msg in res.errors.items():
        log.error("[%s] %s", stage, msg)
    return 0 if res.ok else 2


def _read_breaks(path: Path) -> list[int]:
    return [int(line) for line in path.read_text().split() if line.strip()]


def _replicate(args) -> dict:
    """Run one benchmark replicate; returns a plain dict (picklable)."""
    cfg, seed = args
    spec = load_spec(cfg.spec) if cfg.spec else builtin_scenario(cfg.scenario)
    series = TimeSeries(simulate(spec, seed).values, q=cfg.q)
    plan = cfg.plan_for(series.T, series.p)
    rec = {"seed": seed, "ok": True, "error": "", "breaks": [], "timings": {},
           "ree": math.nan, "tpr": math.nan, "fpr": math.nan, "matched": False,
           "radius": plan.radius}
    try:
        res = detect(series, plan, screen=cfg.screen, scale_to=cfg.scale_to, rho_grid=cfg.rho_grid)
    except StageError as exc:
        rec.update(ok=False, error=str(exc))
        return rec
    rec["breaks"] = list(res.breaks)
    rec["timings"] = res.timings
    rec["errors"] = dict(res.errors)
    if res.model is not None and len(res.breaks) == len(spec.breaks):
        rec["matched"] = True
        rec["ree"] = metrics.ree(res.model, spec)
        rec["tpr"], rec["fpr"] = metrics.support_rates(res.model, spec)
    if cfg.baseline_breaks:
        path = Path(cfg.baseline_breaks) / f"{seed}.txt"
        if path.exists():
            bb = _read_breaks(path)
            rec["baseline_breaks"] = bb
            base = detect(series, replace(plan, radius=0), scale_to=cfg.scale_to,
                          known_breaks=bb, rho_grid=cfg.rho_grid)
            if base.model is not None and len(bb) == len(spec.breaks):
                rec["baseline_ree"] = metrics.ree(base.model, spec)
                rec["baseline_rates"] = list(metrics.support_rates(base.model, spec))
    return rec


def _summaries(recs, spec, radius, key="breaks", ree_key="ree", rates=None):
    good = [r for r in recs if r["ok"] and key in r]
    det = metrics.detection_report([r[key] for r in good], spec.breaks, spec.T, radius,
                                   failures=len(recs) - len(good))
    if rates is None:
        matched = [r for r in good if r.get("matched")]
        est = metrics.estimation_report([r["ree"] for r in matched],
                                        [(r["tpr"], r["fpr"]) for r in matched],
                                        mismatched=len(good) - len(matched))
    else:
        matched = [r for r in good if ree_key in r]
        est = metrics.estimation_report([r[ree_key] for r in matched], [tuple(r[rates]) for r in matched],
                                        mismatched=len(good) - len(matched))
    return det, est


def cmd_benchmark(cfg: RunConfig) -> int:
    if cfg.scenario is None and cfg.spec is None:
        raise ValueError("benchmark needs --scenario or --spec")
    spec = load_spec(cfg.spec) if cfg.spec else builtin_scenario(cfg.scenario)
    seeds = list(range(cfg.seed, cfg.seed + cfg.reps))
    jobs = [(cfg, s) for s in seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            recs = list(ex.map(_replicate, jobs))  # map keeps replicate order
    else:
        recs = [_replicate(j) for j in jobs]
    for r in recs:
        if not r["ok"]:
            log.error("replicate %d failed: %s", r["seed"], r["error"])
    radius = recs[0]["radius"]
    det, est = _summaries(recs, spec, radius)
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario,
        "seeds": seeds,
        "detection": metrics._clean(asdict(det)),
        "estimation": metrics._clean(asdict(est)),
    }
    if cfg.baseline_breaks:
        bdet, best = _summaries(recs, spec, radius, key="baseline_breaks",
                                ree_key="baseline_ree", rates="baseline_rates")
        report["baseline"] = {"detection": metrics._clean(asdict(bdet)),
                              "estimation": metrics._clean(asdict(best))}
    rows = [metrics.ReplicateRecord(
        seed=r["seed"], breaks=r["breaks"],
        hausdorff=metrics.hausdorff(r["breaks"], spec.breaks) if r["ok"] else math.nan,
        ree=r["ree"], tpr=r["tpr"], fpr=r["fpr"], ok=r["ok"], error=r["error"],
        timings=r["timings"]) for r in recs]
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(report, str(out / "report.json"))
        metrics.records_to_csv(rows, out / "replicates.csv")
    else:
        _write_json(report, None)
    return 0 if all(r["ok"] and not r.get("errors") for r in recs) else 2


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sbvar", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def source(p):
        p.add_argument("--scenario", type=int, choices=range(1, 6))
        p.add_argument("--spec", help="generating spec JSON")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--out")

    def tuning(p):
        p.add_argument("--q", type=int, default=1)
        p.add_argument("--lambda1", type=float)
        p.add_argument("--lambda1-grid", type=_floats)
        p.add_argument("--lambda2", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--omega-c", type=float, default=0.5)
        p.add_argument("--rn", type=int)
        p.add_argument("--screen", choices=("bea", "exhaustive"), default="bea")
        p.add_argument("--rho-grid", type=_floats)
        p.add_argument("--scale-to", type=float, default=0.4,
                       help="global sd the data are rescaled to before fitting (0 disables)")

    p = sub.add_parser("simulate", help="simulate a scenario to CSV")
    source(p)

    p = sub.add_parser("detect", help="run the three-stage pipeline on one series")
    source(p)
    tuning(p)
    p.add_argument("--input", help="T x p CSV")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--diff", type=int, default=0, help="difference the data this many times")
    p.add_argument("--breaks-known", type=_ints, help="comma-separated breaks; skips stages 1-2")

    p = sub.add_parser("benchmark", help="replicate a scenario and report accuracy")
    source(p)
    tuning(p)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--baseline-breaks", help="directory of <seed>.txt break lists")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    kw = {k: v for k, v in vars(ns).items() if k in fields}
    if kw.get("scale_to") == 0:
        kw["scale_to"] = None
    return RunConfig(**kw)


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(ns)
    try:
        if ns.command == "simulate":
            return cmd_simulate(cfg)
        cfg.check(need_source=ns.command == "detect")
        if ns.command == "detect":
            return cmd_detect(cfg)
        return cmd_benchmark(cfg)
    except (ValueError, OSError) as exc:
        ap.exit(2, f"sbvar: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
