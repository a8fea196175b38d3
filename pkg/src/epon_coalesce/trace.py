"""Line-oriented trace format.

A trace starts with a magic line and ``# key = value`` header lines holding the
run configuration, followed by one record per line::

    <time_ns> <class> <record> <onu> <fields...>

``<class>`` is the label of the event class being executed (``init`` before the
first event, ``end`` for the closing summary). Records:

=========  ==============================================================
state      ``state <onu> <OFF|WAIT|TRANS|ON>`` state entered at this time
power      ``power <onu> <on|off>`` transmitter switched
gate       ``gate <onu> <cycle> <report_time> <data_slot_start> <grant_bytes>``
report     ``report <onu> <queue_bytes> <queue_frames>``
tx         ``tx <onu> <first_id> <count> <bytes>``; frame k of the burst departs
           at ``time + (k + 1) * frame_tx_ns``
arr        ``arr <onu> <id>`` frame arrival
olt        ``olt <onu> <kind> <detail>`` protocol event seen by the OLT
cycle      ``cycle <index>`` (no onu field)
summary    ``summary <onu> <t_off> <t_wait> <t_trans> <t_on> <frames_in> <frames_out> <queue_frames>``
=========  ==============================================================

Field order is fixed; traces from identical runs are byte-identical.
"""

from __future__ import annotations

from typing import Dict, Iterable, Iterator, List, Tuple

TRACE_MAGIC = "# epon-coalesce trace v1"


class TraceFormatError(ValueError):
    pass


def split_header(lines: Iterable[str]) -> Tuple[Dict[str, str], Iterator[Tuple[int, str]]]:
    """Return (header dict, iterator over (lineno, body line)).

    The header is read eagerly; body lines are yielded lazily so large traces
    need not be held twice.
    """
    it = iter(lines)
    header: Dict[str, str] = {}
    lineno = 0
    first = None
    for raw in it:
        lineno += 1
        line = raw.rstrip("\n")
        if lineno == 1:
            if line != TRACE_MAGIC:
                raise TraceFormatError(f"line 1: not a trace file (got {line[:40]!r})")
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                header[k.strip()] = v.strip()
            continue
        first = (lineno, line)
        break
    if lineno == 0:
        raise TraceFormatError("empty trace")

    def body() -> Iterator[Tuple[int, str]]:
        n = lineno
        if first is not None:
            yield first
        for raw in it:
            n += 1
            line = raw.rstrip("\n")
            if line and not line.startswith("#"):
                yield n, line

    return header, body()


def read_trace(path) -> List[str]:
    with open(path, encoding="ascii") as fh:
        return fh.read().splitlines()
