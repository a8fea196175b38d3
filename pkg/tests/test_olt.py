import pytest

from epon_coalesce.engine import ms, seconds, us
from epon_coalesce.olt import DbaConfig, GateMessage, Olt, ReportMessage, cycle_start, make_gate, transmission_time

DBA = DbaConfig()


def test_defaults():
    assert DBA.cycle_len == ms(1.5)
    assert DBA.cap_bytes_per_cycle == 37_500
    assert DBA.report_deadline == ms(50)


def test_frame_serialization_time():
    assert transmission_time(1500, 10_000_000_000) == us(1.2)
    assert DBA.data_slot_len == 37_500 * 8 // 10


@pytest.mark.parametrize("index,t", [(0, 0), (2, ms(3.0)), (40_000, seconds(60))])
def test_cycle_start(index, t):
    assert cycle_start(index) == t
    assert DBA.cycle_start(index) == t


def test_cycle_start_rejects_negative():
    with pytest.raises(ValueError):
        cycle_start(-1)


@pytest.mark.parametrize("reported,grant", [(100_000, 37_500), (0, 0), (1_500, 1_500), (37_500, 37_500)])
def test_grant_rule(reported, grant):
    gate = make_gate(5, ReportMessage(0, reported), DBA)
    assert gate.data_grant_bytes == grant


def test_no_report_means_no_grant():
    assert make_gate(3, None, DBA).data_grant_bytes == 0


def test_gate_fields_lie_inside_the_cycle():
    gate = make_gate(7, ReportMessage(0, 37_500), DBA)
    start = DBA.cycle_start(7)
    assert gate.report_time == start
    assert gate.data_slot_start == start + 52
    assert gate.data_slot_start + DBA.data_slot_len <= start + DBA.cycle_len


def test_invalid_configs():
    with pytest.raises(ValueError):
        DbaConfig(cycle_len=0)
    with pytest.raises(ValueError):
        DbaConfig(cap_bytes_per_cycle=0)
    with pytest.raises(ValueError):
        DbaConfig(report_deadline=ms(1))
    with pytest.raises(ValueError):
        DbaConfig(cycle_len=ms(0.02))  # a full-cap slot no longer fits
    with pytest.raises(ValueError):
        ReportMessage(0, -1)


def test_multi_onu_slots_do_not_overlap():
    dba = DbaConfig(n_onus=4)
    ends = []
    for j in range(4):
        gate = make_gate(1, ReportMessage(0, 37_500), dba, j)
        ends.append((gate.report_time, gate.data_slot_start + dba.data_slot_len))
    for (a0, a1), (b0, b1) in zip(ends, ends[1:]):
        assert a1 <= b0
    assert ends[-1][1] <= dba.cycle_start(2)
    with pytest.raises(ValueError):
        DbaConfig(n_onus=50)


def _olt_with_report(queue_bytes, cycle=3):
    olt = Olt(DBA)
    olt.initial_gate()
    for k in range(1, cycle + 1):
        olt.issue_gate(k)
    t = DBA.report_time(cycle)
    assert olt.on_report(ReportMessage(t, queue_bytes), t) is None
    return olt, cycle


def test_full_report_grants_25_frames():
    olt, k = _olt_with_report(37_500)
    gate = olt.issue_gate(k + 1)
    assert gate.data_grant_bytes // 1500 == 25


def test_empty_report_grants_nothing():
    olt, k = _olt_with_report(0)
    assert olt.issue_gate(k + 1).data_grant_bytes == 0


def test_stale_report_is_not_reused():
    olt, k = _olt_with_report(30_000)
    olt.issue_gate(k + 1)
    assert olt.issue_gate(k + 2).data_grant_bytes == 0


def test_second_report_in_cycle_is_flagged():
    olt, k = _olt_with_report(1_500)
    t = DBA.report_time(k) + 10
    v = olt.on_report(ReportMessage(t, 3_000), t)
    assert v is not None and v.kind == "duplicate-report"
    # the first report still sizes the grant
    assert olt.issue_gate(k + 1).data_grant_bytes == 1_500


def test_report_outside_slot_is_flagged():
    olt = Olt(DBA)
    olt.initial_gate()
    v = olt.on_report(ReportMessage(ms(0.5), 0), ms(0.5))
    assert v is not None and v.kind == "report-outside-slot"


@pytest.mark.parametrize("now,status", [
    (ms(50.001), "disconnected"),
    (ms(49.9), "connected"),
    (ms(50), "connected"),
])
def test_watchdog_boundaries(now, status):
    olt = Olt(DBA)
    assert olt.watchdog_check(now) == status


def test_watchdog_poll_reports_each_silence_once():
    olt = Olt(DBA)
    olt.initial_gate()
    assert olt.poll_watchdog(ms(51)) is not None
    assert olt.poll_watchdog(ms(52)) is None
    assert len(olt.violations) == 1


def test_gate_message_is_a_value():
    assert GateMessage(1, 2, 3, 4) == GateMessage(1, 2, 3, 4)
