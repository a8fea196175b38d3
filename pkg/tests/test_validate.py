"""Mutation tests: each edit of a clean trace must trip exactly one rule."""

import dataclasses

import pytest

from epon_coalesce.config import SimConfig
from epon_coalesce.engine import seconds
from epon_coalesce.simulation import simulate
from epon_coalesce.trace import TraceFormatError
from epon_coalesce.validate import RULES, rules_hit, validate, validate_file

from mutations import MUTATIONS, clean_trace, find


def clean(load=0.2, q_w=10, duration=0.1, **onu):
    lines = clean_trace(load, q_w, duration, **onu)
    assert validate(lines) == []
    return lines


@pytest.fixture(scope="module")
def base():
    return clean()


def test_rule_list():
    assert set(MUTATIONS) == set(RULES) and len(RULES) == 9


@pytest.mark.parametrize("rule", RULES)
def test_mutation_trips_exactly_its_rule(base, rule):
    mutated = MUTATIONS[rule](base)
    assert mutated != base
    assert rules_hit(validate(mutated)) == {rule}


def test_injected_off_to_on_is_a_state_sequence_violation(base):
    lines = list(base)
    i = find(lines, lambda p: p[2] == "state" and p[4] == "OFF" and p[0] != "0")
    lines.insert(i + 1, lines[i].replace("OFF", "ON"))
    assert "state-sequence" in rules_hit(validate(lines))


def test_header_override_applies_cadence_check():
    lines = clean(load=0.05, q_w=100, duration=0.5, wake_lead=0)
    assert rules_hit(validate(lines, header_override={"onu.wake_lead_ns": "3500000"})) == {"report-cadence"}


def test_wake_lead_zero_is_not_checked_for_cadence():
    lines = clean(load=0.05, q_w=100, duration=0.5, wake_lead=0)
    assert validate(lines) == []


@pytest.mark.parametrize("load,q_w", [(0.05, 1), (0.3, 10), (0.6, 100), (0.9, 10)])
def test_clean_runs(load, q_w):
    clean(load, q_w, duration=1.0)


def test_multi_onu_run_is_clean():
    cfg = SimConfig().with_point(0.4, 10)
    cfg = dataclasses.replace(cfg, dba=dataclasses.replace(cfg.dba, n_onus=3))
    r = simulate(cfg, 7, seconds(0.5))
    assert validate(r.trace.lines) == []
    assert len(r.onus) == 3


@pytest.mark.slow
def test_clean_100_s_half_load():
    r = simulate(SimConfig().with_point(0.5, 10), 1, seconds(100))
    assert validate(r.trace.lines) == []


def test_unreadable_traces(base, tmp_path):
    with pytest.raises(TraceFormatError):
        validate([])
    with pytest.raises(TraceFormatError):
        validate(["not a trace"])
    with pytest.raises(TraceFormatError):
        validate(base[:-1])  # no summary
    bad = list(base)
    bad[-3] = "xyz frame-arrival arr 0 1"
    with pytest.raises(TraceFormatError):
        validate(bad)
    bad = list(base)
    bad.insert(-1, "5 bogus-class thing 0")
    with pytest.raises(TraceFormatError):
        validate(bad)


def test_validate_file(base, tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("\n".join(base) + "\n")
    assert validate_file(p) == []
