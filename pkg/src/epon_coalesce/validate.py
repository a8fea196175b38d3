"""Trace checker.

Re-derives the protocol and automaton rules from the serialized trace alone.
Nothing here imports the automaton or OLT code: the two must agree on every
generated trace, and a disagreement means one of them is wrong.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional

from .trace import TraceFormatError, split_header

RULES = (
    "state-sequence",
    "unpowered-transmission",
    "trans-data",
    "grant-rule",
    "grant-overrun",
    "report-cadence",
    "poweron-lead",
    "fifo",
    "time-partition",
)

_NEXT = {"OFF": "WAIT", "WAIT": "TRANS", "TRANS": "ON", "ON": "OFF"}
_CLASSES = {"init", "cycle-boundary", "gate-delivery", "report-slot", "data-slot-boundary",
            "frame-arrival", "timer", "end"}


@dataclass(frozen=True)
class Violation:
    time: int
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.time} {self.rule}: {self.detail}"


class _Params:
    def __init__(self, h: Mapping[str, str]):
        def geti(key):
            try:
                return int(h[key])
            except KeyError:
                raise TraceFormatError(f"header lacks {key}") from None
            except ValueError:
                return int(float(h[key]))

        self.cycle = geti("dba.cycle_len_ns")
        self.cap = geti("dba.cap_bytes")
        self.report_duration = geti("dba.report_duration_ns")
        self.deadline = geti("dba.report_deadline_ns")
        self.rate = geti("dba.line_rate_bps")
        self.n_onus = geti("dba.n_onus")
        self.q_w = geti("onu.q_w")
        self.delta_on = geti("onu.delta_on_ns")
        self.wake_lead = geti("onu.wake_lead_ns")
        self.frame_bytes = geti("traffic.frame_bytes")
        self.duration = geti("run.duration_ns")
        # slots are ceil(bits / rate) nanoseconds long
        self.frame_tx = -(-self.frame_bytes * 8_000_000_000 // self.rate)
        cap_tx = -(-self.cap * 8_000_000_000 // self.rate)
        self.span = self.report_duration + cap_tx
        self.check_cadence = self.wake_lead >= self.delta_on + self.cycle

    def offset(self, onu: int) -> int:
        return onu * self.span

    def cycle_of(self, t: int, onu: int) -> int:
        return (t - self.offset(onu)) // self.cycle


class _Onu:
    def __init__(self):
        self.state: Optional[str] = None
        self.since = 0
        self.occ = {"OFF": 0, "WAIT": 0, "TRANS": 0, "ON": 0}
        self.powered = False
        self.last_report = 0
        self.reports: Dict[int, int] = {}
        self.gates: Dict[int, tuple] = {}
        self.tx_bytes: Dict[int, int] = {}
        self.trans_entry: Optional[int] = None
        self.prev_record: Optional[tuple] = None
        self.next_arr = 0
        self.next_tx = 0
        self.busy_until = -1
        self.summary: Optional[List[int]] = None


def validate(lines: Iterable[str], header_override: Optional[Mapping[str, str]] = None) -> List[Violation]:
    """Check a trace; returns the list of violations (empty means clean).

    ``lines`` may be a list of strings or an open file. ``header_override``
    replaces header values, e.g. to check a trace against another config.
    Raises :class:`TraceFormatError` for unreadable input.
    """
    header, body = split_header(lines)
    if header_override:
        header = {**header, **header_override}
    p = _Params(header)
    onus = [_Onu() for _ in range(p.n_onus)]
    out: List[Violation] = []
    add = out.append
    last_t = 0
    end_seen = False

    for lineno, line in body:
        parts = line.split()
        if len(parts) == 5 and parts[2] == "arr" and parts[1] == "frame-arrival":
            # fast path for the bulk of any trace
            try:
                t = int(parts[0])
                o = onus[int(parts[3])]
                fid = int(parts[4])
            except (IndexError, ValueError):
                raise TraceFormatError(f"line {lineno}: malformed 'arr' record") from None
            if t < last_t:
                add(Violation(t, "time-partition", f"line {lineno}: time goes backwards from {last_t}"))
            else:
                last_t = t
            if fid != o.next_arr:
                add(Violation(t, "fifo", f"onu {parts[3]}: arrival id {fid}, expected {o.next_arr}"))
            o.next_arr = fid + 1
            continue
        if len(parts) < 3:
            raise TraceFormatError(f"line {lineno}: too few fields")
        try:
            t = int(parts[0])
        except ValueError:
            raise TraceFormatError(f"line {lineno}: bad timestamp {parts[0]!r}") from None
        cls, rec = parts[1], parts[2]
        if cls not in _CLASSES:
            raise TraceFormatError(f"line {lineno}: unknown event class {cls!r}")
        if t < last_t:
            add(Violation(t, "time-partition", f"line {lineno}: time goes backwards from {last_t}"))
        last_t = max(last_t, t)

        if rec == "cycle":
            continue
        try:
            j = int(parts[3])
            if j < 0:
                raise IndexError(j)
            o = onus[j]
            args = [int(x) for x in parts[4:]] if rec not in ("state", "power", "olt") else parts[4:]
        except (IndexError, ValueError):
            raise TraceFormatError(f"line {lineno}: malformed {rec!r} record") from None

        if rec == "arr":
            if args[0] != o.next_arr:
                add(Violation(t, "fifo", f"onu {j}: arrival id {args[0]}, expected {o.next_arr}"))
            o.next_arr = args[0] + 1
            # arrivals do not end the record run that the idle check inspects
            continue

        if rec == "state":
            new = args[0]
            if new not in _NEXT:
                raise TraceFormatError(f"line {lineno}: unknown state {new!r}")
            if o.state is None:
                if new != "OFF" or t != 0:
                    add(Violation(t, "state-sequence", f"onu {j}: must start OFF at 0, got {new}"))
            else:
                if _NEXT[o.state] != new:
                    add(Violation(t, "state-sequence", f"onu {j}: illegal {o.state}->{new}"))
                if new == "OFF":
                    prev = o.prev_record
                    if not (prev and prev[0] == "report" and prev[1] == t and prev[2] < p.q_w):
                        add(Violation(t, "state-sequence", f"onu {j}: power-down without a preceding idle report"))
                if o.state == "TRANS" and o.trans_entry is not None:
                    add(Violation(t, "poweron-lead", f"onu {j}: left TRANS without reporting"))
                    o.trans_entry = None
                o.occ[o.state] += t - o.since
            if new == "TRANS":
                o.trans_entry = t
            o.state, o.since = new, t

        elif rec == "power":
            o.powered = args[0] == "on"

        elif rec == "report":
            queue_bytes, queue_frames = args[0], args[1]
            if not o.powered:
                add(Violation(t, "unpowered-transmission", f"onu {j}: report with transmitter off"))
            if p.check_cadence and t - o.last_report > p.deadline:
                add(Violation(t, "report-cadence", f"onu {j}: {t - o.last_report} ns since previous report"))
            o.last_report = t
            o.reports[p.cycle_of(t, j)] = queue_bytes
            if o.trans_entry is not None:
                if t - o.trans_entry != p.delta_on:
                    add(Violation(t, "poweron-lead",
                                  f"onu {j}: powered at {o.trans_entry}, reported {t - o.trans_entry} ns later"))
                o.trans_entry = None
            o.prev_record = ("report", t, queue_frames)
            continue

        elif rec == "gate":
            cycle, _report_time, data_start, grant = args
            prior = o.reports.get(cycle - 1)
            expected = 0 if prior is None else min(prior, p.cap)
            if grant != expected:
                add(Violation(t, "grant-rule", f"onu {j}: cycle {cycle} grant {grant}, expected {expected}"))
            o.gates[cycle] = (grant, data_start)
            o.reports.pop(cycle - 3, None)
            o.gates.pop(cycle - 3, None)

        elif rec == "tx":
            first, count, nbytes = args
            if not o.powered:
                add(Violation(t, "unpowered-transmission", f"onu {j}: data with transmitter off"))
            if o.state == "TRANS":
                add(Violation(t, "trans-data", f"onu {j}: {count} frames sent in TRANS"))
            cycle = p.cycle_of(t, j)
            grant, start = o.gates.get(cycle, (0, None))
            used = o.tx_bytes.get(cycle, 0) + nbytes
            o.tx_bytes = {cycle: used}
            if used > grant:
                add(Violation(t, "grant-overrun", f"onu {j}: {used} bytes against grant {grant}"))
            if start is not None and t != start:
                add(Violation(t, "grant-overrun", f"onu {j}: burst at {t}, slot starts {start}"))
            if first != o.next_tx:
                add(Violation(t, "fifo", f"onu {j}: burst starts at frame {first}, expected {o.next_tx}"))
            if first + count > o.next_arr:
                add(Violation(t, "fifo", f"onu {j}: sends frame {first + count - 1} before it arrived"))
            if nbytes != count * p.frame_bytes:
                add(Violation(t, "fifo", f"onu {j}: {count} frames but {nbytes} bytes"))
            if t < o.busy_until:
                add(Violation(t, "fifo", f"onu {j}: burst overlaps previous departures"))
            o.busy_until = t + count * p.frame_tx
            o.next_tx = first + count

        elif rec == "summary":
            if cls != "end":
                raise TraceFormatError(f"line {lineno}: summary outside end record")
            end_seen = True
            o.summary = args
            if t != p.duration:
                add(Violation(t, "time-partition", f"onu {j}: run ends at {t}, header says {p.duration}"))

        elif rec == "olt":
            pass
        else:
            raise TraceFormatError(f"line {lineno}: unknown record {rec!r}")
        o.prev_record = (rec, t)

    if not end_seen:
        raise TraceFormatError("trace has no end summary (truncated?)")

    for j, o in enumerate(onus):
        if o.state is None:
            add(Violation(0, "state-sequence", f"onu {j}: no initial state"))
            continue
        o.occ[o.state] += p.duration - o.since
        if o.trans_entry is not None and o.trans_entry + p.delta_on <= p.duration:
            add(Violation(p.duration, "poweron-lead", f"onu {j}: TRANS entered at {o.trans_entry} never reported"))
        if p.check_cadence and p.duration - o.last_report > p.deadline:
            add(Violation(p.duration, "report-cadence",
                          f"onu {j}: {p.duration - o.last_report} ns without a report at end of run"))
        s = o.summary
        if s is None:
            add(Violation(p.duration, "time-partition", f"onu {j}: missing summary"))
            continue
        t_off, t_wait, t_trans, t_on, f_in, f_out, queue = s
        occ = (o.occ["OFF"], o.occ["WAIT"], o.occ["TRANS"], o.occ["ON"])
        if (t_off, t_wait, t_trans, t_on) != occ:
            add(Violation(p.duration, "time-partition", f"onu {j}: summary times {s[:4]} != trace {list(occ)}"))
        if t_off + t_wait + t_trans + t_on != p.duration:
            add(Violation(p.duration, "time-partition", f"onu {j}: state times do not sum to the run length"))
        if f_in != o.next_arr or f_out != o.next_tx or queue != f_in - f_out:
            add(Violation(p.duration, "fifo",
                          f"onu {j}: in={f_in} out={f_out} queue={queue}, trace has {o.next_arr} in / {o.next_tx} out"))
    return out


def validate_file(path) -> List[Violation]:
    with open(path, encoding="ascii") as fh:
        return validate(fh)


def rules_hit(violations: Iterable[Violation]) -> set:
    return {v.rule for v in violations}
