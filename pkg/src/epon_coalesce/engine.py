"""Deterministic discrete-event engine.

Time is an integer count of nanoseconds. Events are totally ordered by
``(time, class, seq)`` so that simultaneous events always execute in the same
order, independent of insertion pattern or platform.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable, Iterator, List, Optional

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def ms(value: float) -> int:
    """Milliseconds to integer nanoseconds (rounded to nearest)."""
    return round(value * NS_PER_MS)


def us(value: float) -> int:
    return round(value * NS_PER_US)


def seconds(value: float) -> int:
    return round(value * NS_PER_S)


class EventClass(IntEnum):
    # Order matters: administrative events precede traffic at equal timestamps.
    # New classes must be appended to keep replays stable.
    CYCLE_BOUNDARY = 0
    GATE_DELIVERY = 1
    REPORT_SLOT = 2
    DATA_SLOT_BOUNDARY = 3
    FRAME_ARRIVAL = 4
    TIMER = 5

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    EventClass.CYCLE_BOUNDARY: "cycle-boundary",
    EventClass.GATE_DELIVERY: "gate-delivery",
    EventClass.REPORT_SLOT: "report-slot",
    EventClass.DATA_SLOT_BOUNDARY: "data-slot-boundary",
    EventClass.FRAME_ARRIVAL: "frame-arrival",
    EventClass.TIMER: "timer",
}


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(frozen=True, order=True)
class TimedEvent:
    time: int
    cls: EventClass
    seq: int


class EventHandle:
    __slots__ = ("time", "cls", "seq", "callback", "args", "fired", "cancelled")

    def __init__(self, time: int, cls: EventClass, seq: int, callback: Callable[..., Any], args: tuple):
        self.time = time
        self.cls = cls
        self.seq = seq
        self.callback = callback
        self.args = args
        self.fired = False
        self.cancelled = False

    @property
    def event(self) -> TimedEvent:
        return TimedEvent(self.time, self.cls, self.seq)

    @property
    def pending(self) -> bool:
        return not (self.fired or self.cancelled)

    def __repr__(self) -> str:
        state = "fired" if self.fired else "cancelled" if self.cancelled else "pending"
        return f"<EventHandle {self.time}ns {EventClass(self.cls).label} #{self.seq} {state}>"


class EventTrace:
    """Ordered text records emitted while the engine runs.

    Each record is ``"<time_ns> <class> <detail...>"``; see :mod:`epon_coalesce.trace`.
    """

    def __init__(self, lines: Optional[List[str]] = None):
        self.lines: List[str] = lines if lines is not None else []

    def __len__(self) -> int:
        return len(self.lines)

    def __iter__(self) -> Iterator[str]:
        return iter(self.lines)

    def __getitem__(self, idx):
        return self.lines[idx]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, EventTrace):
            return self.lines == other.lines
        return NotImplemented

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    def dump(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.text())


class Engine:
    """Single-threaded event loop with integer-nanosecond clock."""

    def __init__(self, tracing: bool = True):
        self.now = 0
        self.current_class: Optional[EventClass] = None
        self.tracing = tracing
        self._heap: list = []
        self._seq = 0
        self._lines: List[str] = []
        self._streams: list = []

    def schedule(self, time: int, cls: EventClass, callback: Callable[..., Any], *args) -> EventHandle:
        if time < self.now:
            raise SchedulingError(f"event at {time} ns scheduled with clock at {self.now} ns")
        seq = self._seq
        self._seq = seq + 1
        handle = EventHandle(time, cls, seq, callback, args)
        heapq.heappush(self._heap, (time, cls, seq, handle))
        return handle

    @property
    def epoch(self) -> int:
        """Changes whenever something is scheduled; lets streams notice new events."""
        return self._seq

    def add_stream(self, stream) -> None:
        """Attach a pre-drawn event stream.

        ``stream.next_time`` is the time of its next event (``None`` when done)
        and ``stream.fire_batch(limit)`` fires events strictly before ``limit``,
        returning early once :attr:`epoch` moves. Stream events sort as class
        FRAME_ARRIVAL; ties between streams go to the one attached first.
        """
        if stream.next_time is not None and stream.next_time < self.now:
            raise SchedulingError(f"stream starts at {stream.next_time} with clock at {self.now}")
        self._streams.append(stream)

    def remove_stream(self, stream) -> None:
        self._streams.remove(stream)

    def cancel(self, handle: EventHandle) -> bool:
        if handle.fired or handle.cancelled:
            return False
        handle.cancelled = True
        return True

    def emit(self, detail: str, cls: Optional[EventClass] = None) -> None:
        """Append a trace record stamped with the current time and event class."""
        if not self.tracing:
            return
        c = cls if cls is not None else self.current_class
        label = c.label if c is not None else "init"
        self._lines.append(f"{self.now} {label} {detail}")

    def emit_raw(self, line: str) -> None:
        if self.tracing:
            self._lines.append(line)

    def pending(self) -> int:
        return sum(1 for entry in self._heap if entry[3].pending)

    def run_until(self, t_end: int) -> EventTrace:
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) with clock at {self.now}")
        start = len(self._lines)
        heap = self._heap
        pop = heapq.heappop
        streams = self._streams
        arrival = EventClass.FRAME_ARRIVAL
        stop = t_end + 1
        while True:
            while heap and heap[0][3].cancelled:
                pop(heap)
            if heap:
                ht, hc = heap[0][0], heap[0][1]
                # stream events precede heap events of a later class at the same instant
                limit = ht + 1 if hc > arrival else ht
                if limit > stop:
                    limit = stop
            else:
                limit = stop
            if streams:
                stream, limit = self._earliest_stream(limit)
                if stream is not None:
                    self.current_class = arrival
                    stream.fire_batch(limit)
                    continue
            if not heap or heap[0][0] > t_end:
                break
            time, cls, _seq, handle = pop(heap)
            self.now = time
            self.current_class = cls
            handle.fired = True
            handle.callback(*handle.args)
        self.now = t_end
        self.current_class = None
        return EventTrace(self._lines[start:])

    def _earliest_stream(self, limit: int):
        streams = self._streams
        if len(streams) == 1:
            s = streams[0]
            t = s.next_time
            return (s, limit) if t is not None and t < limit else (None, limit)
        best = None
        best_t = None
        for i, s in enumerate(streams):
            t = s.next_time
            if t is not None and (best_t is None or t < best_t):
                best, best_t = i, t
        if best is None or best_t >= limit:
            return None, limit
        for i, s in enumerate(streams):
            t = s.next_time
            if i == best or t is None:
                continue
            bound = t + 1 if i > best else t
            if bound < limit:
                limit = bound
        return streams[best], limit

    @property
    def trace(self) -> EventTrace:
        """Everything emitted since the engine was created."""
        return EventTrace(self._lines)
