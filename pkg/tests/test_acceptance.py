"""Acceptance gate at desk scale.

One full sweep (18 loads x q_w {1, 10, 100} x 10 seeds x 100 s, every trace
validated) is shared by all criteria. On one core this takes about an hour;
set EPON_JOBS to use more worker processes. Results land in
``acceptance_results/`` next to the tests.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from epon_coalesce.config import DEFAULT_LOADS, ExperimentPlan, SimConfig
from epon_coalesce.engine import NS_PER_S, ms, seconds, us
from epon_coalesce.metrics import PowerProfile
from epon_coalesce.olt import DbaConfig, ReportMessage, make_gate, transmission_time
from epon_coalesce.onu import OnuState, wait_poweron_time
from epon_coalesce.simulation import simulate
from epon_coalesce.sweep import emit_plotdata, run_experiment, run_one
from epon_coalesce.validate import RULES, rules_hit, validate

from mutations import MUTATIONS, clean_trace

pytestmark = pytest.mark.acceptance

Q_WS = (1, 10, 100)
SEEDS = tuple(range(1, 11))
DURATION = seconds(100)
OUT = Path(__file__).resolve().parent.parent / "acceptance_results"


@pytest.fixture(scope="session")
def sweep():
    plan = ExperimentPlan(loads=DEFAULT_LOADS, q_ws=Q_WS, seeds=SEEDS, duration=DURATION, base=SimConfig())
    jobs = int(os.environ.get("EPON_JOBS", os.cpu_count() or 1))
    OUT.mkdir(exist_ok=True)
    result = run_experiment(plan, out=str(OUT / "results.csv"), check=True, abort=False, jobs=jobs)
    emit_plotdata(OUT / "results.csv", OUT)
    return plan, result


@pytest.fixture(scope="session")
def agg(sweep):
    return sweep[1].by_point()


def _fmt_fail(items):
    return "; ".join(items[:6]) + (f"; +{len(items) - 6} more" if len(items) > 6 else "")


def test_criterion_01_threshold_ordering(agg, criterion_note):
    bad = []
    for load in DEFAULT_LOADS:
        p1, p10, p100 = (agg[(load, q)].power_pct for q in Q_WS)
        if not p100 <= p10 <= p1:
            bad.append(f"rho={load}: {p100:.2f} / {p10:.2f} / {p1:.2f}")
        elif load <= 0.5 and not (p10 - p100 > 0.5 and p1 - p10 > 0.5):
            bad.append(f"rho={load}: gaps {p10 - p100:.2f}, {p1 - p10:.2f} pp")
    criterion_note("ordered everywhere" if not bad else _fmt_fail(bad))
    assert not bad


def test_criterion_02_near_ideal_at_qw100(agg, criterion_note):
    profile = PowerProfile()
    gaps = {load: agg[(load, 100)].power_pct - profile.ideal_pct(load) for load in DEFAULT_LOADS if load <= 0.8}
    bad = [f"rho={l}: +{g:.2f} pp" for l, g in gaps.items() if abs(g) > 10]
    worst = max(gaps.items(), key=lambda kv: abs(kv[1]))
    criterion_note(f"worst gap {worst[1]:+.2f} pp at rho={worst[0]}" + (f" ({_fmt_fail(bad)})" if bad else ""))
    assert not bad


def test_criterion_03_delay_bound(agg, criterion_note):
    worst = max(agg.values(), key=lambda s: s.mean_delay)
    criterion_note(f"max mean delay {worst.mean_delay * 1e3:.2f} ms (rho={worst.load}, q_w={worst.q_w})")
    assert all(s.mean_delay < 0.040 for s in agg.values())


def test_criterion_04_low_load_delay_convergence(agg, criterion_note):
    d10, d100 = agg[(0.05, 10)].mean_delay, agg[(0.05, 100)].mean_delay
    rel = abs(d10 - d100) / max(d10, d100)
    criterion_note(f"q_w=10 {d10 * 1e3:.2f} ms vs q_w=100 {d100 * 1e3:.2f} ms, {rel:.0%} apart")
    assert rel < 0.15


def test_criterion_05_trans_overhead_ordering(agg, criterion_note):
    bad = [f"rho={l}: {agg[(l, 1)].t_trans:.3f} s vs {agg[(l, 100)].t_trans:.3f} s"
           for l in DEFAULT_LOADS if not agg[(l, 1)].t_trans > agg[(l, 100)].t_trans]
    criterion_note("holds at every load" if not bad else f"{len(bad)}/{len(DEFAULT_LOADS)} loads fail: {_fmt_fail(bad)}")
    assert not bad


def test_criterion_06_monotone_in_load(agg, criterion_note):
    bad = []
    for q in Q_WS:
        on = [agg[(l, q)].t_on for l in DEFAULT_LOADS]
        sleep = [agg[(l, q)].t_off + agg[(l, q)].t_wait for l in DEFAULT_LOADS]
        for i in range(1, len(DEFAULT_LOADS)):
            if on[i] < on[i - 1]:
                bad.append(f"q_w={q} t_on drops {on[i - 1]:.3f}->{on[i]:.3f} s at rho={DEFAULT_LOADS[i]}")
            if sleep[i] > sleep[i - 1]:
                bad.append(f"q_w={q} sleep rises {sleep[i - 1]:.3f}->{sleep[i]:.3f} s at rho={DEFAULT_LOADS[i]}")
    criterion_note("monotone for every q_w" if not bad else _fmt_fail(bad))
    assert not bad


def test_criterion_07_throughput_conservation(sweep, agg, criterion_note):
    plan, result = sweep
    bits = plan.base.traffic.frame_bytes * 8
    worst = 0.0
    for (load, q), s in agg.items():
        rate = s.frames_out * bits / (DURATION / NS_PER_S)
        worst = max(worst, abs(rate / (load * plan.base.traffic.rate_bps) - 1))
    leaks = [r.summary for r in result.runs if r.summary.frames_in - r.summary.frames_out != r.summary.final_queue]
    criterion_note(f"worst throughput error {worst:.2%}; {len(leaks)} runs with queue mismatch")
    assert worst < 0.02
    assert not leaks


def test_criterion_08_oracle_cleanliness(sweep, criterion_note):
    _, result = sweep
    dirty = [r for r in result.runs if not r.validated or r.violations]
    base = clean_trace()
    assert validate(base) == []
    caught = {rule: rules_hit(validate(MUTATIONS[rule](base))) for rule in RULES}
    missed = [rule for rule, hit in caught.items() if hit != {rule}]
    criterion_note(f"{len(result.runs)} runs validated, {len(dirty)} dirty; mutations missed: {missed or 'none'}")
    assert not dirty
    assert not missed


def test_criterion_09_timing_examples(criterion_note):
    dba = DbaConfig()
    delta = ms(2)
    assert wait_poweron_time(ms(0.2), dba, delta) == ms(1.0)
    assert wait_poweron_time(ms(4.6), dba, delta) == ms(5.5)
    assert wait_poweron_time(ms(0.2), dba, 0) == ms(1.5)
    assert make_gate(1, ReportMessage(0, 100_000), dba).data_grant_bytes == 37_500
    assert make_gate(1, ReportMessage(0, 1_500), dba).data_grant_bytes == 1_500
    assert make_gate(1, ReportMessage(0, 0), dba).data_grant_bytes == 0
    assert transmission_time(1500, dba.line_rate_bps) == us(1.2)
    # TRANS length over real runs stays inside [delta, delta + 2 cycles)
    spans = []
    for load, q_w in ((0.05, 1), (0.3, 10), (0.6, 100)):
        r = simulate(SimConfig().with_point(load, q_w), 3, seconds(5), tracing=False)
        tr = r.onus[0].transitions
        spans += [b[0] - a[0] for a, b in zip(tr, tr[1:]) if a[1] is OnuState.TRANS]
    assert spans and all(delta <= s < delta + 2 * dba.cycle_len for s in spans)
    criterion_note(f"hand examples exact; {len(spans)} TRANS spans in [{min(spans)}, {max(spans)}] ns")


def test_criterion_10_determinism(sweep, tmp_path, criterion_note):
    plan, result = sweep
    picks = [(0.05, 100, 1), (0.5, 10, 4), (0.9, 1, 10)]
    rows = {}
    for line in result.csv_text.splitlines()[1:]:
        f = line.split(",")
        rows[(f[0], f[1], f[2])] = line
    from epon_coalesce.sweep import csv_row
    for load, q, seed in picks:
        a = run_one(plan.base, load, q, seed, DURATION, trace_dir=str(tmp_path / "a"))
        b = run_one(plan.base, load, q, seed, DURATION, trace_dir=str(tmp_path / "b"))
        assert Path(a.trace_path).read_bytes() == Path(b.trace_path).read_bytes()
        assert ",".join(csv_row(a.summary)) == rows[(f"{load:g}", str(q), str(seed))]
    again = run_experiment(ExperimentPlan(loads=(0.3,), q_ws=Q_WS, seeds=(1, 2), duration=seconds(5)))
    assert again.csv_text == run_experiment(ExperimentPlan(loads=(0.3,), q_ws=Q_WS, seeds=(1, 2),
                                                           duration=seconds(5))).csv_text
    criterion_note(f"{len(picks)} full-length reruns byte-identical (trace and CSV row)")
