"""One simulation run: engine + OLT + ONU automata + Pareto sources.

The driver owns every side effect. It schedules the fixed cycle structure,
feeds events to the automaton and executes the actions the automaton returns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import onu as fsm
from .config import SimConfig, format_value
from .engine import Engine, EventClass, EventTrace
from .metrics import MetricsSummary, StateTimes, accumulate, summarize
from .olt import GateMessage, Olt, ProtocolViolation, ReportMessage
from .onu import OnuContext, OnuState
from .trace import TRACE_MAGIC
from .traffic import Frame, ParetoSource

_REPORT = EventClass.REPORT_SLOT
_GATE = EventClass.GATE_DELIVERY
_DATA = EventClass.DATA_SLOT_BOUNDARY
_CYCLE = EventClass.CYCLE_BOUNDARY
_TIMER = EventClass.TIMER


def stream_seed(seed: int, load: float, onu: int = 0) -> np.random.SeedSequence:
    """Independent stream for (seed, load, onu).

    The threshold is deliberately not mixed in, so every q_w sees the same
    arrivals at a given (load, seed).
    """
    return np.random.SeedSequence([seed & (2**64 - 1), round(load * 1_000_000), onu])


@dataclass
class OnuRun:
    onu: int
    transitions: List[Tuple[int, OnuState]]
    times: StateTimes
    full_times: StateTimes
    delays: np.ndarray
    frames_in: int
    frames_out: int
    final_queue: int


@dataclass
class RunResult:
    config: SimConfig
    seed: int
    duration: int
    onus: List[OnuRun]
    violations: List[ProtocolViolation] = field(default_factory=list)
    trace: Optional[EventTrace] = None

    def summary(self, onu: int = 0) -> MetricsSummary:
        r = self.onus[onu]
        return summarize(
            self.config.traffic.load, self.config.onu.q_w, self.seed, r.times, r.delays,
            r.frames_in, r.frames_out, r.final_queue, self.config.power,
        )


class _OnuPort:
    """Per-ONU mutable bookkeeping held by the driver (not by the automaton)."""

    __slots__ = ("idx", "ctx", "timers", "transitions", "delays", "frames_in", "frames_out", "source")

    def __init__(self, idx: int):
        self.idx = idx
        self.ctx = OnuContext(onu=idx)
        self.timers = {}
        self.transitions = [(0, OnuState.OFF)]
        self.delays: List[int] = []
        self.frames_in = 0
        self.frames_out = 0
        self.source: Optional[ParetoSource] = None


class Simulation:
    def __init__(self, cfg: SimConfig, seed: int, tracing: bool = True):
        self.cfg = cfg
        self.seed = seed
        self.engine = Engine(tracing=tracing)
        self.olt = Olt(cfg.dba)
        self.ports = [_OnuPort(j) for j in range(cfg.dba.n_onus)]
        self._started = False

    # -- setup -------------------------------------------------------------

    def _header(self, duration: int) -> None:
        emit = self.engine.emit_raw
        emit(TRACE_MAGIC)
        for key, value in self.cfg.flat().items():
            emit(f"# {key} = {format_value(value)}")
        emit(f"# run.seed = {self.seed}")
        emit(f"# run.duration_ns = {duration}")

    def _start(self, duration: int) -> None:
        eng = self.engine
        self._header(duration)
        for port in self.ports:
            j = port.idx
            eng.emit(f"state {j} OFF")
            gate = self.olt.initial_gate(j)
            fsm.on_gate(port.ctx, gate)
            eng.emit(self._gate_line(j, gate))
            port.ctx.state_entered_at = 0
            self._arm(port, fsm.keepalive_time(0, self.cfg.dba, self.cfg.onu), fsm.KEEPALIVE)
            rng = np.random.Generator(np.random.PCG64(stream_seed(self.seed, self.cfg.traffic.load, j)))
            port.source = ParetoSource(self.cfg.traffic, eng, self._make_sink(port), rng)
            port.source.start()
        eng.schedule(0, _CYCLE, self._on_cycle, 0)
        self._started = True

    @staticmethod
    def _gate_line(j: int, gate: GateMessage) -> str:
        return f"gate {j} {gate.cycle_index} {gate.report_time} {gate.data_slot_start} {gate.data_grant_bytes}"

    # -- action execution ----------------------------------------------------

    def _arm(self, port: _OnuPort, time: int, kind: str) -> None:
        old = port.timers.get(kind)
        if old is not None:
            self.engine.cancel(old)
        cb = self._on_poweron if kind == fsm.POWERON else self._on_keepalive
        port.timers[kind] = self.engine.schedule(time, _TIMER, cb, port)

    def _apply(self, port: _OnuPort, old_state: OnuState, actions) -> None:
        eng = self.engine
        j = port.idx
        ctx = port.ctx
        rest = actions
        if actions and type(actions[0]) is fsm.SendReport:
            rep = actions[0]
            rest = actions[1:]
            eng.emit(f"report {j} {rep.queue_bytes} {rep.queue_frames}")
            v = self.olt.on_report(ReportMessage(eng.now, rep.queue_bytes), eng.now, j)
            if v is not None:
                eng.emit(f"olt {j} {v.kind} {v.detail}")
        if ctx.state is not old_state:
            port.transitions.append((eng.now, ctx.state))
            eng.emit(f"state {j} {ctx.state.value}")
        for a in rest:
            kind = type(a)
            if kind is fsm.TransmitFrames:
                frames = a.frames
                eng.emit(f"tx {j} {frames[0].id} {len(frames)} {a.n_bytes}")
                warmup = self.cfg.warmup
                delays = port.delays
                for f in frames:
                    if f.arrival >= warmup:
                        delays.append(f.departure - f.arrival)
                port.frames_out += len(frames)
            elif kind is fsm.ArmTimer:
                self._arm(port, a.time, a.kind)
            elif kind is fsm.CancelTimer:
                h = port.timers.pop(a.kind, None)
                if h is not None:
                    eng.cancel(h)
            elif kind is fsm.PowerOn:
                eng.emit(f"power {j} on")
            elif kind is fsm.PowerOff:
                eng.emit(f"power {j} off")
            else:
                raise TypeError(f"unexpected action {a!r}")

    # -- event handlers --------------------------------------------------------

    def _make_sink(self, port: _OnuPort):
        eng = self.engine
        ctx = port.ctx
        dba = self.cfg.dba
        scfg = self.cfg.onu
        j = port.idx
        on_arrival = fsm.on_frame_arrival
        apply = self._apply
        tracing = eng.tracing
        lines = eng._lines

        tag = f" frame-arrival arr {j} "

        def sink(frame: Frame) -> None:
            if tracing:
                lines.append(f"{frame.arrival}{tag}{frame.id}")
            old = ctx.state
            actions = on_arrival(ctx, frame, frame.arrival, dba, scfg)
            if actions:
                apply(port, old, actions)

        return sink

    def _on_cycle(self, k: int) -> None:
        eng = self.engine
        dba = self.cfg.dba
        now = eng.now
        eng.emit(f"cycle {k}")
        for port in self.ports:
            j = port.idx
            ctx = port.ctx
            old = ctx.state
            fsm.on_cycle_boundary(ctx, now)
            if ctx.state is not old:
                self._apply(port, old, ())
            v = self.olt.poll_watchdog(now, j)
            if v is not None:
                eng.emit(f"olt {j} {v.kind} {v.detail}")
            eng.schedule(dba.report_time(k, j), _REPORT, self._on_report_slot, port)
            eng.schedule(dba.gate_delivery_time(k, j), _GATE, self._on_gate, port, k + 1)
        eng.schedule(now + dba.cycle_len, _CYCLE, self._on_cycle, k + 1)

    def _on_report_slot(self, port: _OnuPort) -> None:
        ctx = port.ctx
        now = self.engine.now
        if ctx.state is OnuState.WAIT and ctx.poweron_at == now:
            # zero power-up latency: the power-on coincides with the slot and must precede it
            h = port.timers.pop(fsm.POWERON, None)
            if h is not None:
                self.engine.cancel(h)
            self._apply(port, OnuState.WAIT, fsm.on_poweron_timer(ctx, now, self.cfg.onu.delta_on))
        if ctx.state is OnuState.TRANS or ctx.state is OnuState.ON:
            old = ctx.state
            self._apply(port, old, fsm.on_report_slot(ctx, now, self.cfg.dba, self.cfg.onu))

    def _on_gate(self, port: _OnuPort, cycle: int) -> None:
        gate = self.olt.issue_gate(cycle, port.idx)
        fsm.on_gate(port.ctx, gate)
        self.engine.emit(self._gate_line(port.idx, gate))
        if gate.data_grant_bytes > 0:
            self.engine.schedule(gate.data_slot_start, _DATA, self._on_data_slot, port, gate)

    def _on_data_slot(self, port: _OnuPort, gate: GateMessage) -> None:
        ctx = port.ctx
        if ctx.state is not OnuState.ON:
            return  # grant answered a report sent just before sleeping
        actions = fsm.on_data_slot(ctx, gate, self.engine.now, self.cfg.dba, self.cfg.onu)
        if actions:
            self._apply(port, OnuState.ON, actions)

    def _on_poweron(self, port: _OnuPort) -> None:
        port.timers.pop(fsm.POWERON, None)
        self._apply(port, port.ctx.state, fsm.on_poweron_timer(port.ctx, self.engine.now, self.cfg.onu.delta_on))

    def _on_keepalive(self, port: _OnuPort) -> None:
        port.timers.pop(fsm.KEEPALIVE, None)
        ctx = port.ctx
        self._apply(port, ctx.state, fsm.on_keepalive_timer(ctx, self.engine.now, self.cfg.dba, self.cfg.onu))

    # -- driving -----------------------------------------------------------------

    def run(self, duration: int) -> RunResult:
        if self._started:
            raise RuntimeError("a Simulation instance runs once")
        self._start(duration)
        eng = self.engine
        eng.run_until(duration)
        onus = []
        for port in self.ports:
            port.frames_in = port.source.generated
            full = accumulate(port.transitions, duration)
            measured = accumulate(port.transitions, duration, t_start=self.cfg.warmup) if self.cfg.warmup else full
            queue = len(port.ctx.queue)
            eng.emit_raw(
                f"{duration} end summary {port.idx} {full.t_off} {full.t_wait} {full.t_trans} {full.t_on} "
                f"{port.frames_in} {port.frames_out} {queue}")
            onus.append(OnuRun(
                onu=port.idx, transitions=port.transitions, times=measured, full_times=full,
                delays=np.asarray(port.delays, dtype=np.int64),
                frames_in=port.frames_in, frames_out=port.frames_out, final_queue=queue,
            ))
        trace = eng.trace if eng.tracing else None
        return RunResult(self.cfg, self.seed, duration, onus, list(self.olt.violations), trace)


def simulate(cfg: SimConfig, seed: int, duration: int, tracing: bool = True) -> RunResult:
    return Simulation(cfg, seed, tracing=tracing).run(duration)
