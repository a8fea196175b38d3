"""State occupancy, relative power and delay statistics, plus cross-seed aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .engine import NS_PER_S
from .onu import LEGAL_TRANSITIONS, OnuState


class MalformedTrace(ValueError):
    pass


@dataclass(frozen=True)
class PowerProfile:
    p_on: float = 10.0
    p_off: float = 1.0

    def __post_init__(self):
        if not self.p_on > self.p_off > 0:
            raise ValueError(f"need p_on > p_off > 0, got {self.p_on}, {self.p_off}")

    @property
    def floor_pct(self) -> float:
        return 100.0 * self.p_off / self.p_on

    def ideal_pct(self, load: float) -> float:
        """Consumption of a zero-overhead mechanism powered exactly while sending."""
        return self.floor_pct + (100.0 - self.floor_pct) * load


@dataclass(frozen=True)
class StateTimes:
    t_off: int = 0
    t_wait: int = 0
    t_trans: int = 0
    t_on: int = 0

    def __post_init__(self):
        if min(self.t_off, self.t_wait, self.t_trans, self.t_on) < 0:
            raise ValueError("state durations must be non-negative")

    @property
    def total(self) -> int:
        return self.t_off + self.t_wait + self.t_trans + self.t_on

    @property
    def powered(self) -> int:
        return self.t_trans + self.t_on

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.t_off, self.t_wait, self.t_trans, self.t_on)

    def fractions(self) -> Tuple[float, float, float, float]:
        total = self.total
        return tuple(t / total for t in self.as_tuple())

    @classmethod
    def from_mapping(cls, d) -> "StateTimes":
        return cls(d[OnuState.OFF], d[OnuState.WAIT], d[OnuState.TRANS], d[OnuState.ON])


def accumulate(transitions: Sequence[Tuple[int, OnuState]], t_end: int, t_start: int = 0) -> StateTimes:
    """Occupancy from ``(time, new_state)`` pairs; the first must be at ``t_start``.

    Time before ``t_start`` is ignored only for the warm-up window: transitions
    may precede it, in which case the state active at ``t_start`` is credited.
    """
    if not transitions:
        raise MalformedTrace("empty transition sequence")
    if transitions[0][0] != 0:
        raise MalformedTrace(f"first transition at {transitions[0][0]}, expected 0")
    acc = {s: 0 for s in OnuState}
    prev_t, prev_s = transitions[0]
    for t, s in transitions[1:]:
        if t < prev_t:
            raise MalformedTrace(f"transition at {t} precedes {prev_t}")
        if s != prev_s and (prev_s, s) not in LEGAL_TRANSITIONS:
            raise MalformedTrace(f"illegal transition {prev_s.value}->{s.value} at {t}")
        lo, hi = max(prev_t, t_start), min(t, t_end)
        if hi > lo:
            acc[prev_s] += hi - lo
        prev_t, prev_s = t, s
    if t_end < prev_t:
        raise MalformedTrace(f"t_end {t_end} precedes last transition at {prev_t}")
    lo = max(prev_t, t_start)
    if t_end > lo:
        acc[prev_s] += t_end - lo
    return StateTimes.from_mapping(acc)


def power_fraction(times: StateTimes, profile: PowerProfile = PowerProfile()) -> float:
    total = times.total
    if total <= 0:
        raise ValueError("no simulated time")
    awake = times.t_on + times.t_trans
    asleep = times.t_off + times.t_wait
    return 100.0 * (awake * profile.p_on + asleep * profile.p_off) / (total * profile.p_on)


def nearest_rank(sorted_values, pct: float):
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return sorted_values[rank - 1]


def delay_stats(delays_ns) -> Tuple[float, float]:
    """Mean and nearest-rank 95th percentile of per-frame delays, in seconds.

    Accepts either delays in ns or departed :class:`Frame` objects.
    """
    values = list(delays_ns)
    if not values:
        raise ValueError("no completed frames")
    if not isinstance(values[0], (int, np.integer, float)):
        if any(f.departure is None for f in values):
            raise ValueError("frame without departure")
        values = [f.departure - f.arrival for f in values]
    arr = np.asarray(values, dtype=np.int64)
    mean = float(arr.sum()) / arr.size / NS_PER_S
    k = max(1, math.ceil(0.95 * arr.size))
    p95 = float(np.partition(arr, k - 1)[k - 1]) / NS_PER_S
    return mean, p95


@dataclass
class MetricsSummary:
    load: float
    q_w: int
    seed: Optional[int]
    times: Tuple[float, float, float, float]  # seconds: off, wait, trans, on
    state_fractions: Tuple[float, float, float, float]
    power_pct: float
    mean_delay: float
    p95_delay: float
    frames_in: float
    frames_out: float
    ci95_power: Optional[float] = None
    ci95_delay: Optional[float] = None
    n_runs: int = 1
    final_queue: float = 0
    extra: dict = field(default_factory=dict)

    @property
    def t_off(self) -> float:
        return self.times[0]

    @property
    def t_wait(self) -> float:
        return self.times[1]

    @property
    def t_trans(self) -> float:
        return self.times[2]

    @property
    def t_on(self) -> float:
        return self.times[3]


def summarize(load: float, q_w: int, seed: Optional[int], times: StateTimes, delays_ns,
              frames_in: int, frames_out: int, final_queue: int,
              profile: PowerProfile = PowerProfile()) -> MetricsSummary:
    if len(delays_ns):
        mean, p95 = delay_stats(delays_ns)
    else:
        mean = p95 = math.nan
    return MetricsSummary(
        load=load, q_w=q_w, seed=seed,
        times=tuple(t / NS_PER_S for t in times.as_tuple()),
        state_fractions=times.fractions(),
        power_pct=power_fraction(times, profile),
        mean_delay=mean, p95_delay=p95,
        frames_in=frames_in, frames_out=frames_out, final_queue=final_queue,
    )


def t_halfwidth(values: Sequence[float], confidence: float = 0.95) -> float:
    """Half-width of the Student-t confidence interval for the mean."""
    arr = np.asarray(values, dtype=float)
    n = arr.size
    if n < 2:
        raise ValueError("need at least two samples")
    sd = arr.std(ddof=1)
    if sd == 0:
        return 0.0
    return float(stats.t.ppf(0.5 + confidence / 2, n - 1) * sd / math.sqrt(n))


def aggregate(runs: Iterable[MetricsSummary]) -> MetricsSummary:
    """Mean across seeds; a single run gets NaN confidence half-widths."""
    runs = list(runs)
    if not runs:
        raise ValueError("nothing to aggregate")
    key = (runs[0].load, runs[0].q_w)
    if any((r.load, r.q_w) != key for r in runs):
        raise ValueError("cannot aggregate runs with different (load, q_w)")
    # sort so the float sums do not depend on the order runs were supplied in
    runs = sorted(runs, key=lambda r: (r.seed is None, r.seed if r.seed is not None else 0))

    def mean(xs: List[float]) -> float:
        return math.fsum(xs) / len(xs)

    times = tuple(mean([r.times[i] for r in runs]) for i in range(4))
    fracs = tuple(mean([r.state_fractions[i] for r in runs]) for i in range(4))
    power = [r.power_pct for r in runs]
    delay = [r.mean_delay for r in runs]
    return MetricsSummary(
        load=key[0], q_w=key[1], seed=None,
        times=times, state_fractions=fracs,
        power_pct=mean(power),
        mean_delay=mean(delay),
        p95_delay=mean([r.p95_delay for r in runs]),
        frames_in=mean([r.frames_in for r in runs]),
        frames_out=mean([r.frames_out for r in runs]),
        final_queue=mean([r.final_queue for r in runs]),
        ci95_power=t_halfwidth(sorted(power)) if len(runs) > 1 else math.nan,
        ci95_delay=t_halfwidth(sorted(delay)) if len(runs) > 1 else math.nan,
        n_runs=len(runs),
    )
