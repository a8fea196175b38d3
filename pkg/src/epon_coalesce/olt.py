"""OLT side of the MPCP exchange: fixed DBA cycles, gates, reports, watchdog.

Within each cycle an ONU owns a report slot at ``cycle_start + offset`` followed
immediately by its data slot. The gate for cycle i+1 is delivered half a cycle
after the ONU's report slot in cycle i and grants ``min(report, cap)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional

from .engine import NS_PER_S


@dataclass(frozen=True)
class DbaConfig:
    cycle_len: int = 1_500_000
    cap_bytes_per_cycle: int = 37_500
    report_duration: int = 52
    report_deadline: int = 50_000_000
    line_rate_bps: int = 10_000_000_000
    n_onus: int = 1

    def __post_init__(self):
        if self.cycle_len <= 0:
            raise ValueError("cycle_len must be positive")
        if self.cap_bytes_per_cycle <= 0:
            raise ValueError("cap_bytes_per_cycle must be positive")
        if self.report_duration < 0:
            raise ValueError("report_duration must be non-negative")
        if self.report_deadline < self.cycle_len:
            raise ValueError("report_deadline must be at least one cycle")
        if self.line_rate_bps <= 0:
            raise ValueError("line_rate_bps must be positive")
        if self.n_onus < 1:
            raise ValueError("n_onus must be >= 1")
        if self.n_onus * self.slot_span > self.cycle_len:
            raise ValueError(
                f"{self.n_onus} ONU slots of {self.slot_span} ns do not fit a {self.cycle_len} ns cycle")

    @cached_property
    def data_slot_len(self) -> int:
        return transmission_time(self.cap_bytes_per_cycle, self.line_rate_bps)

    @cached_property
    def slot_span(self) -> int:
        """Report slot plus a full-cap data slot."""
        return self.report_duration + self.data_slot_len

    def report_offset(self, onu: int) -> int:
        return onu * self.slot_span

    def cycle_start(self, index: int) -> int:
        if index < 0:
            raise ValueError("cycle index must be >= 0")
        return index * self.cycle_len

    def cycle_of(self, t: int) -> int:
        return t // self.cycle_len

    def report_time(self, index: int, onu: int = 0) -> int:
        return index * self.cycle_len + self.report_offset(onu)

    def gate_delivery_time(self, index: int, onu: int = 0) -> int:
        """When the gate for cycle ``index + 1`` reaches ONU ``onu``."""
        return self.report_time(index, onu) + self.cycle_len // 2


def transmission_time(n_bytes: int, rate_bps: int) -> int:
    """Serialization time in ns, rounded up to whole nanoseconds."""
    return -(-(n_bytes * 8 * NS_PER_S) // rate_bps)


def cycle_start(index: int, dba: DbaConfig = DbaConfig()) -> int:
    return dba.cycle_start(index)


@dataclass(frozen=True)
class GateMessage:
    cycle_index: int
    report_time: int
    data_slot_start: int
    data_grant_bytes: int


@dataclass(frozen=True)
class ReportMessage:
    sent_at: int
    queue_bytes: int

    def __post_init__(self):
        if self.queue_bytes < 0:
            raise ValueError("queue_bytes must be >= 0")


def make_gate(cycle_index: int, last_report: Optional[ReportMessage], dba: DbaConfig, onu: int = 0) -> GateMessage:
    """Gate for ``cycle_index``; ``last_report`` must come from the cycle before (or be None)."""
    grant = 0 if last_report is None else min(last_report.queue_bytes, dba.cap_bytes_per_cycle)
    report_time = dba.report_time(cycle_index, onu)
    return GateMessage(cycle_index, report_time, report_time + dba.report_duration, grant)


@dataclass
class ProtocolViolation:
    time: int
    onu: int
    kind: str
    detail: str


class Olt:
    """Per-ONU report bookkeeping, grant sizing and the disconnect watchdog."""

    def __init__(self, dba: DbaConfig):
        self.dba = dba
        n = dba.n_onus
        # ONUs are registered at t=0; that instant counts as the last contact.
        self.last_report: List[Optional[ReportMessage]] = [None] * n
        self.last_contact: List[int] = [0] * n
        self.report_cycle: List[int] = [-1] * n
        self.gates: List[Dict[int, GateMessage]] = [{} for _ in range(n)]
        self.violations: List[ProtocolViolation] = []
        self.disconnected: List[bool] = [False] * n

    def initial_gate(self, onu: int = 0) -> GateMessage:
        gate = make_gate(0, None, self.dba, onu)
        self.gates[onu] = {0: gate}
        return gate

    def issue_gate(self, cycle_index: int, onu: int = 0) -> GateMessage:
        """Build the gate for ``cycle_index`` from the report of ``cycle_index - 1``."""
        report = self.last_report[onu]
        if report is not None and self.report_cycle[onu] != cycle_index - 1:
            report = None
        gate = make_gate(cycle_index, report, self.dba, onu)
        gates = self.gates[onu]
        gates[cycle_index] = gate
        gates.pop(cycle_index - 2, None)
        return gate

    def on_report(self, report: ReportMessage, now: int, onu: int = 0) -> Optional[ProtocolViolation]:
        cycle = self.dba.cycle_of(now - self.dba.report_offset(onu))
        gate = self.gates[onu].get(cycle)
        violation = None
        if gate is None or not gate.report_time <= report.sent_at <= gate.report_time + self.dba.report_duration:
            violation = ProtocolViolation(now, onu, "report-outside-slot", f"sent_at={report.sent_at}")
        elif self.report_cycle[onu] == cycle:
            violation = ProtocolViolation(now, onu, "duplicate-report", f"cycle={cycle}")
        if violation is not None:
            self.violations.append(violation)
            return violation
        self.last_report[onu] = report
        self.report_cycle[onu] = cycle
        self.last_contact[onu] = now
        self.disconnected[onu] = False
        return None

    def watchdog_check(self, now: int, onu: int = 0) -> str:
        if now - self.last_contact[onu] > self.dba.report_deadline:
            return "disconnected"
        return "connected"

    def poll_watchdog(self, now: int, onu: int = 0) -> Optional[ProtocolViolation]:
        """Record one violation per silent stretch that exceeds the deadline."""
        if self.disconnected[onu] or self.watchdog_check(now, onu) == "connected":
            return None
        self.disconnected[onu] = True
        v = ProtocolViolation(now, onu, "disconnected", f"last_report={self.last_contact[onu]}")
        self.violations.append(v)
        return v

