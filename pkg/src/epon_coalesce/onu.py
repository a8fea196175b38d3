"""ONU upstream sleep automaton with packet coalescing.

States cycle OFF -> WAIT -> TRANS -> ON -> OFF. The transmitter is unpowered in
OFF and WAIT and powered in TRANS and ON. Handlers update the context in place
and return the side effects as a list of actions; they never touch the engine,
the OLT or any clock other than the ``now`` they are given.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, List, Optional, Sequence, Tuple

from .olt import DbaConfig, GateMessage, transmission_time
from .traffic import Frame


class OnuState(str, Enum):
    OFF = "OFF"
    WAIT = "WAIT"
    TRANS = "TRANS"
    ON = "ON"


LEGAL_TRANSITIONS = frozenset({
    (OnuState.OFF, OnuState.WAIT),
    (OnuState.WAIT, OnuState.TRANS),
    (OnuState.TRANS, OnuState.ON),
    (OnuState.ON, OnuState.OFF),
})

POWERED = frozenset({OnuState.TRANS, OnuState.ON})


class AutomatonFault(RuntimeError):
    """A handler was invoked in a state where the schedule should never call it."""


@dataclass(frozen=True)
class SleepConfig:
    q_w: int = 10
    delta_on: int = 2_000_000
    wake_lead: int = 3_500_000

    def __post_init__(self):
        if self.q_w < 1:
            raise ValueError("q_w must be >= 1")
        if self.delta_on < 0:
            raise ValueError("delta_on must be >= 0")
        if self.wake_lead < 0:
            raise ValueError("wake_lead must be >= 0")


# Timer kinds
POWERON = "poweron"
KEEPALIVE = "keepalive"


@dataclass(frozen=True)
class PowerOn:
    pass


@dataclass(frozen=True)
class PowerOff:
    pass


@dataclass(frozen=True)
class SendReport:
    queue_bytes: int
    queue_frames: int


@dataclass(frozen=True)
class TransmitFrames:
    frames: Tuple[Frame, ...]
    n_bytes: int


@dataclass(frozen=True)
class ArmTimer:
    time: int
    kind: str


@dataclass(frozen=True)
class CancelTimer:
    kind: str


Action = object
_NO_ACTIONS: Tuple = ()


@dataclass
class OnuContext:
    state: OnuState = OnuState.OFF
    queue: Deque[Frame] = field(default_factory=deque)
    queue_bytes: int = 0
    last_report_sent: int = 0
    last_gate: Optional[GateMessage] = None
    poweron_at: Optional[int] = None
    # report slot the power-up is aimed at; earlier slots pass while warming up
    report_due: Optional[int] = None
    state_entered_at: int = 0
    # set when a data slot leaves the queue empty; the next report is the final one
    emptied: bool = False
    # TRANS has already sent its report and moves to ON at the next cycle start
    trans_reported: bool = False
    onu: int = 0

    @property
    def powered(self) -> bool:
        return self.state in POWERED

    def _enter(self, state: OnuState, now: int) -> None:
        self.state = state
        self.state_entered_at = now


def should_sleep(queue_frames: int, q_w: int) -> bool:
    return queue_frames < q_w


def keepalive_time(last_report_sent: int, dba: DbaConfig, cfg: SleepConfig) -> int:
    return last_report_sent + dba.report_deadline - cfg.wake_lead


def wait_poweron_time(now: int, dba: DbaConfig, delta_on: int, onu: int = 0) -> int:
    """Power-on instant for a WAIT entered at ``now``.

    Targets the earliest report slot at or after ``now + delta_on`` and returns
    ``delta_on`` before it. With zero latency the slot must still lie strictly
    in the future, since a slot at ``now`` has already been executed.
    """
    earliest = now + max(delta_on, 1)
    offset = dba.report_offset(onu)
    k = -(-(earliest - offset) // dba.cycle_len)
    t_report = k * dba.cycle_len + offset
    return t_report - delta_on


def _wake(ctx: OnuContext, now: int, dba: DbaConfig, cfg: SleepConfig) -> int:
    ctx._enter(OnuState.WAIT, now)
    ctx.poweron_at = wait_poweron_time(now, dba, cfg.delta_on, ctx.onu)
    return ctx.poweron_at


def on_frame_arrival(ctx: OnuContext, frame: Frame, now: int, dba: DbaConfig, cfg: SleepConfig) -> Sequence[Action]:
    ctx.queue.append(frame)
    ctx.queue_bytes += frame.size_bytes
    if ctx.state is OnuState.OFF and len(ctx.queue) >= cfg.q_w:
        t = _wake(ctx, now, dba, cfg)
        return [CancelTimer(KEEPALIVE), ArmTimer(t, POWERON)]
    return _NO_ACTIONS


def on_keepalive_timer(ctx: OnuContext, now: int, dba: DbaConfig, cfg: SleepConfig) -> Sequence[Action]:
    if ctx.state is not OnuState.OFF:
        raise AutomatonFault(f"keepalive fired in {ctx.state.value}")
    t = _wake(ctx, now, dba, cfg)
    return [ArmTimer(t, POWERON)]


def on_poweron_timer(ctx: OnuContext, now: int, delta_on: int) -> Sequence[Action]:
    if ctx.state is not OnuState.WAIT or ctx.poweron_at != now:
        raise AutomatonFault(f"power-on timer at {now} in {ctx.state.value} (expected {ctx.poweron_at})")
    ctx._enter(OnuState.TRANS, now)
    ctx.report_due = now + delta_on
    ctx.poweron_at = None
    ctx.trans_reported = False
    return [PowerOn()]


def on_cycle_boundary(ctx: OnuContext, now: int) -> Sequence[Action]:
    if ctx.state is OnuState.TRANS and ctx.trans_reported:
        ctx._enter(OnuState.ON, now)
        ctx.trans_reported = False
        ctx.emptied = False
    return _NO_ACTIONS


def on_gate(ctx: OnuContext, gate: GateMessage) -> Sequence[Action]:
    # Gates arrive on the downstream path, which stays up in every state.
    ctx.last_gate = gate
    return _NO_ACTIONS


def on_report_slot(ctx: OnuContext, now: int, dba: DbaConfig, cfg: SleepConfig) -> Sequence[Action]:
    state = ctx.state
    if state is not OnuState.TRANS and state is not OnuState.ON:
        raise AutomatonFault(f"report slot at {now} reached in {state.value}")
    if state is OnuState.TRANS and (ctx.trans_reported or now < ctx.report_due):
        return _NO_ACTIONS
    n = len(ctx.queue)
    actions: List[Action] = [SendReport(ctx.queue_bytes, n)]
    ctx.last_report_sent = now
    if state is OnuState.TRANS:
        ctx.trans_reported = True
    elif ctx.emptied:
        ctx.emptied = False
        if should_sleep(n, cfg.q_w):
            ctx._enter(OnuState.OFF, now)
            actions.append(PowerOff())
            actions.append(ArmTimer(max(now, keepalive_time(now, dba, cfg)), KEEPALIVE))
    return actions


def on_data_slot(ctx: OnuContext, gate: GateMessage, now: int, dba: DbaConfig,
                 cfg: SleepConfig = SleepConfig()) -> Sequence[Action]:
    if ctx.state is not OnuState.ON:
        raise AutomatonFault(f"data slot at {now} reached in {ctx.state.value}")
    budget = gate.data_grant_bytes
    if budget <= 0:
        return _NO_ACTIONS
    queue = ctx.queue
    rate = dba.line_rate_bps
    sent = []
    t = now
    size = tx = None
    while queue and queue[0].size_bytes <= budget:
        frame = queue.popleft()
        if frame.size_bytes != size:
            size = frame.size_bytes
            tx = transmission_time(size, rate)
        budget -= size
        t += tx
        frame.departure = t
        sent.append(frame)
    n_bytes = gate.data_grant_bytes - budget
    ctx.queue_bytes -= n_bytes
    if not queue:
        ctx.emptied = True
    if not sent:
        return _NO_ACTIONS
    return [TransmitFrames(tuple(sent), n_bytes)]
