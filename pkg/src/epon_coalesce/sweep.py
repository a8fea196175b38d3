"""Experiment sweeps: run every (load, q_w, seed) triple, write CSV and plot data."""

from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .config import ExperimentPlan, SimConfig
from .metrics import MetricsSummary, PowerProfile, aggregate
from .simulation import simulate
from .validate import Violation, validate

CSV_COLUMNS = (
    "load", "q_w", "seed", "t_off_s", "t_wait_s", "t_trans_s", "t_on_s", "power_pct",
    "mean_delay_ms", "p95_delay_ms", "frames_in", "frames_out", "ci95_power", "ci95_delay",
)

PLOT_FILES = {
    "fig3": "fig3_state_fractions.tsv",
    "fig4": "fig4_power.tsv",
    "fig5": "fig5_delay.tsv",
}


class ValidationFailed(RuntimeError):
    """A sweep run produced a trace the checker rejects."""

    def __init__(self, load: float, q_w: int, seed: int, violations: Sequence[Violation]):
        self.load, self.q_w, self.seed = load, q_w, seed
        self.violations = list(violations)
        shown = "\n".join(f"  {v}" for v in self.violations[:20])
        more = len(self.violations) - 20
        tail = f"\n  ... {more} more" if more > 0 else ""
        super().__init__(
            f"run load={load} q_w={q_w} seed={seed}: {len(self.violations)} violation(s)\n{shown}{tail}")


@dataclass
class RunRecord:
    summary: MetricsSummary
    validated: bool
    violations: List[Violation]
    trace_path: Optional[str] = None


@dataclass
class SweepResult:
    runs: List[RunRecord]
    aggregates: List[MetricsSummary]
    csv_text: str

    def by_point(self) -> Dict[Tuple[float, int], MetricsSummary]:
        return {(a.load, a.q_w): a for a in self.aggregates}


def trace_name(load: float, q_w: int, seed: int) -> str:
    return f"trace_load{load:g}_qw{q_w}_seed{seed}.txt"


def run_one(base: SimConfig, load: float, q_w: int, seed: int, duration: int,
            check: bool = False, trace_dir: Optional[str] = None) -> RunRecord:
    """A single sweep point. Top-level so worker processes can pickle it."""
    cfg = base.with_point(load, q_w)
    tracing = check or trace_dir is not None
    result = simulate(cfg, seed, duration, tracing=tracing)
    path = None
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
        path = os.path.join(trace_dir, trace_name(load, q_w, seed))
        result.trace.dump(path)
    violations = validate(result.trace.lines) if check else []
    return RunRecord(result.summary(), check, violations, path)


def _run_star(args) -> RunRecord:
    return run_one(*args)


def _fmt(x, spec: str) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return format(x, spec)


def csv_row(s: MetricsSummary) -> List[str]:
    agg = s.seed is None
    count = ".1f" if agg else "d"
    return [
        f"{s.load:g}", str(s.q_w), "agg" if agg else str(s.seed),
        *(_fmt(t, ".9f") for t in s.times),
        _fmt(s.power_pct, ".6f"),
        _fmt(s.mean_delay * 1e3, ".6f"),
        _fmt(s.p95_delay * 1e3, ".6f"),
        _fmt(s.frames_in, count), _fmt(s.frames_out, count),
        _fmt(s.ci95_power, ".6f") if agg else "",
        _fmt(s.ci95_delay * 1e3 if s.ci95_delay is not None else None, ".6f") if agg else "",
    ]


def format_csv(runs: Iterable[MetricsSummary], aggregates: Iterable[MetricsSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in runs:
        w.writerow(csv_row(s))
    for s in aggregates:
        w.writerow(csv_row(s))
    return buf.getvalue()


def run_experiment(plan: ExperimentPlan, out: Optional[str] = None, trace_dir: Optional[str] = None,
                   check: bool = False, jobs: int = 1, abort: bool = True,
                   progress: Optional[Callable[[int, int, RunRecord], None]] = None) -> SweepResult:
    """Run the whole plan. Output does not depend on ``jobs``.

    Per-run rows come in (load, q_w, seed) plan order, followed by one
    aggregate row per (load, q_w). ``ci95_delay`` is in milliseconds.
    With ``check`` every trace is validated; the first failing run raises
    :class:`ValidationFailed` unless ``abort`` is false, in which case the
    violations stay on the returned records.
    """
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
    tasks = [(plan.base, load, q, seed, plan.duration, check, trace_dir) for load, q, seed in plan.triples()]
    records: List[RunRecord] = []

    def collect(rec: RunRecord) -> None:
        if rec.violations and abort:
            s = rec.summary
            raise ValidationFailed(s.load, s.q_w, s.seed, rec.violations)
        records.append(rec)
        if progress:
            progress(len(records), len(tasks), rec)

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec in pool.map(_run_star, tasks):
                collect(rec)
    else:
        for task in tasks:
            collect(_run_star(task))

    groups: Dict[Tuple[float, int], List[MetricsSummary]] = defaultdict(list)
    for rec in records:
        groups[(rec.summary.load, rec.summary.q_w)].append(rec.summary)
    aggregates = [aggregate(groups[p]) for p in plan.points()]
    text = format_csv([r.summary for r in records], aggregates)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
    return SweepResult(records, aggregates, text)


# -- plot data ---------------------------------------------------------------

class PlotDataError(ValueError):
    pass


def _read_points(csv_path) -> Dict[Tuple[float, int], Dict[str, float]]:
    with open(csv_path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise PlotDataError(f"{csv_path}: missing column(s) {', '.join(missing)}")
        agg: Dict[Tuple[float, int], Dict[str, float]] = {}
        per_seed: Dict[Tuple[float, int], List[Dict[str, float]]] = defaultdict(list)
        numeric = ("t_off_s", "t_wait_s", "t_trans_s", "t_on_s", "power_pct", "mean_delay_ms")
        for row in reader:
            try:
                key = (float(row["load"]), int(row["q_w"]))
                values = {c: float(row[c]) for c in numeric}
            except (TypeError, ValueError) as exc:
                raise PlotDataError(f"{csv_path}: bad row {row!r} ({exc})") from None
            if row["seed"] == "agg":
                agg[key] = values
            else:
                per_seed[key].append(values)
    if agg:
        return agg
    return {k: {c: math.fsum(r[c] for r in rows) / len(rows) for c in rows[0]} for k, rows in per_seed.items()}


def ideal_power(load: float, profile: PowerProfile = PowerProfile()) -> float:
    return profile.ideal_pct(load)


def emit_plotdata(csv_path, out_dir, profile: PowerProfile = PowerProfile()) -> Dict[str, str]:
    """Write the three tab-separated plot files; returns {figure: path}."""
    points = _read_points(csv_path)
    if not points:
        raise PlotDataError(f"{csv_path}: no data rows")
    loads = sorted({k[0] for k in points})
    q_ws = sorted({k[1] for k in points})
    os.makedirs(out_dir, exist_ok=True)

    def cell(load, q, fn):
        v = points.get((load, q))
        return "nan" if v is None else f"{fn(v):.6f}"

    def fractions(v):
        total = v["t_off_s"] + v["t_wait_s"] + v["t_trans_s"] + v["t_on_s"]
        return [v[c] / total for c in ("t_off_s", "t_wait_s", "t_trans_s", "t_on_s")]

    fig3 = ["load\t" + "\t".join(f"{s}_qw{q}" for q in q_ws for s in ("off", "wait", "trans", "on"))]
    for load in loads:
        cells = []
        for q in q_ws:
            for i in range(4):
                cells.append(cell(load, q, lambda v, i=i: fractions(v)[i]))
        fig3.append(f"{load:g}\t" + "\t".join(cells))

    fig4 = ["load\t" + "\t".join(f"power_qw{q}" for q in q_ws) + "\tideal"]
    for load in loads:
        cells = [cell(load, q, lambda v: v["power_pct"]) for q in q_ws]
        fig4.append(f"{load:g}\t" + "\t".join(cells) + f"\t{ideal_power(load, profile):.6f}")

    fig5 = ["load\t" + "\t".join(f"delay_ms_qw{q}" for q in q_ws)]
    for load in loads:
        fig5.append(f"{load:g}\t" + "\t".join(cell(load, q, lambda v: v["mean_delay_ms"]) for q in q_ws))

    paths = {}
    for name, lines in (("fig3", fig3), ("fig4", fig4), ("fig5", fig5)):
        path = os.path.join(out_dir, PLOT_FILES[name])
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        paths[name] = path
    return paths
