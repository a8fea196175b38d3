"""Pareto frame-arrival source.

Interarrival times are Pareto(x_m, alpha) and every frame has the same size.
The scale x_m is calibrated so the long-run bit rate equals ``load * rate_bps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .engine import NS_PER_S, Engine

_BLOCK = 1 << 14


@dataclass(frozen=True)
class TrafficConfig:
    alpha: float = 2.5
    frame_bytes: int = 1500
    load: float = 0.5
    rate_bps: float = 200e6
    seed: int = 1

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must be > 1 for a finite mean, got {self.alpha}")
        if not 0 < self.load < 1:
            raise ValueError(f"load must lie in (0, 1), got {self.load}")
        if self.frame_bytes <= 0:
            raise ValueError("frame_bytes must be positive")
        if self.rate_bps <= 0:
            raise ValueError("rate_bps must be positive")

    @property
    def mean_interarrival_ns(self) -> float:
        return self.frame_bytes * 8 * NS_PER_S / (self.load * self.rate_bps)

    @property
    def frames_per_second(self) -> float:
        return self.load * self.rate_bps / (self.frame_bytes * 8)


class Frame:
    """Upstream data unit. ``departure`` is None until transmitted."""

    __slots__ = ("id", "size_bytes", "arrival", "departure")

    def __init__(self, id: int, size_bytes: int, arrival: int, departure: Optional[int] = None):
        self.id = id
        self.size_bytes = size_bytes
        self.arrival = arrival
        self.departure = departure

    @property
    def delay(self) -> int:
        if self.departure is None:
            raise ValueError(f"frame {self.id} has not departed")
        return self.departure - self.arrival

    def __repr__(self) -> str:
        return f"Frame(id={self.id}, size_bytes={self.size_bytes}, arrival={self.arrival}, departure={self.departure})"

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.id, self.size_bytes, self.arrival, self.departure) == (
            other.id, other.size_bytes, other.arrival, other.departure)


def pareto_scale(alpha: float, frame_bytes: int, load: float, rate_bps: float) -> float:
    """Pareto scale in ns giving mean interarrival frame_bits / (load * rate)."""
    if alpha <= 1:
        raise ValueError("alpha must be > 1")
    if load <= 0:
        raise ValueError("load must be positive")
    mean = frame_bytes * 8 * NS_PER_S / (load * rate_bps)
    return mean * (alpha - 1) / alpha


def calibrate_scale(cfg: TrafficConfig) -> float:
    return pareto_scale(cfg.alpha, cfg.frame_bytes, cfg.load, cfg.rate_bps)


def pareto_from_uniform(x_m: float, alpha: float, u: float) -> int:
    """Inverse CDF of Pareto(x_m, alpha) for ``u`` in (0, 1], rounded to ns."""
    return round(x_m * u ** (-1.0 / alpha))


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream seeded from a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(seed))


def next_interarrival(x_m: float, alpha: float, rng: np.random.Generator) -> int:
    # random() is on [0, 1); flip it onto (0, 1] so U=0 is impossible
    u = 1.0 - rng.random()
    return pareto_from_uniform(x_m, alpha, u)


def interarrival_block(x_m: float, alpha: float, rng: np.random.Generator, n: int) -> list:
    """Vectorised ``next_interarrival``; same draws in the same order."""
    return _gaps(x_m, alpha, rng, n).tolist()


def _gaps(x_m: float, alpha: float, rng: np.random.Generator, n: int) -> np.ndarray:
    u = 1.0 - rng.random(n)
    return np.rint(x_m * u ** (-1.0 / alpha)).astype(np.int64)


class ParetoSource:
    """Pre-drawn stream of frame arrivals attached to an engine.

    ``sink(frame)`` is called for every arrival at the arrival instant, with
    ``engine.now`` set to the arrival time.
    """

    def __init__(self, cfg: TrafficConfig, engine: Engine, sink: Callable[[Frame], None],
                 rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.engine = engine
        self.sink = sink
        self.rng = rng if rng is not None else make_rng(cfg.seed)
        self.x_m = calibrate_scale(cfg)
        self.generated = 0
        self.next_time: Optional[int] = None
        self._times: list = []
        self._pos = 0
        self._last = 0

    def _refill(self) -> None:
        gaps = _gaps(self.x_m, self.cfg.alpha, self.rng, _BLOCK)
        times = np.cumsum(gaps) + self._last
        self._last = int(times[-1])
        self._times = times.tolist()
        self._pos = 0

    def start(self) -> None:
        self._last = self.engine.now
        self._refill()
        self.next_time = self._times[0]
        self.engine.add_stream(self)

    def stop(self) -> None:
        if self.next_time is not None:
            self.engine.remove_stream(self)
            self.next_time = None

    def fire_batch(self, limit: int) -> None:
        engine = self.engine
        epoch = engine._seq  # moves whenever the sink schedules something
        sink = self.sink
        size = self.cfg.frame_bytes
        times = self._times
        pos = self._pos
        n = len(times)
        gen = self.generated
        t = times[pos]
        while t < limit:
            engine.now = t
            frame = Frame(gen, size, t)
            gen += 1
            pos += 1
            if pos == n:
                self._refill()
                times = self._times
                pos = 0
            sink(frame)
            if self.next_time is None:  # stopped from inside the sink
                self.generated = gen
                return
            t = times[pos]
            if engine._seq != epoch:
                break
        self._pos = pos
        self.generated = gen
        self.next_time = t


def install(cfg: TrafficConfig, engine: Engine, sink: Callable[[Frame], None],
            rng: Optional[np.random.Generator] = None) -> ParetoSource:
    """Attach a Pareto source to ``engine`` (expected at t=0) and schedule its first arrival."""
    source = ParetoSource(cfg, engine, sink, rng)
    source.start()
    return source


def expected_frames(cfg: TrafficConfig, duration_ns: int) -> float:
    return cfg.frames_per_second * duration_ns / NS_PER_S


def pareto_mean(x_m: float, alpha: float) -> float:
    if alpha <= 1:
        return math.inf
    return alpha * x_m / (alpha - 1)
