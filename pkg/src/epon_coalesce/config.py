"""Run configuration and the flat ``key = value`` experiment file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .engine import NS_PER_S
from .metrics import PowerProfile
from .olt import DbaConfig
from .onu import SleepConfig
from .traffic import TrafficConfig

DEFAULT_LOADS = tuple(round(0.05 * i, 2) for i in range(1, 19))


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SimConfig:
    traffic: TrafficConfig = TrafficConfig()
    dba: DbaConfig = DbaConfig()
    onu: SleepConfig = SleepConfig()
    power: PowerProfile = PowerProfile()
    warmup: int = 0

    def with_point(self, load: float, q_w: int) -> "SimConfig":
        return dataclasses.replace(
            self,
            traffic=dataclasses.replace(self.traffic, load=load),
            onu=dataclasses.replace(self.onu, q_w=q_w),
        )

    def flat(self) -> Dict[str, object]:
        """Configuration as flat keys, in a fixed order."""
        t, d, o, p = self.traffic, self.dba, self.onu, self.power
        return {
            "traffic.alpha": t.alpha,
            "traffic.frame_bytes": t.frame_bytes,
            "traffic.load": t.load,
            "traffic.rate_bps": t.rate_bps,
            "traffic.seed": t.seed,
            "dba.cycle_len_ns": d.cycle_len,
            "dba.cap_bytes": d.cap_bytes_per_cycle,
            "dba.report_duration_ns": d.report_duration,
            "dba.report_deadline_ns": d.report_deadline,
            "dba.line_rate_bps": d.line_rate_bps,
            "dba.n_onus": d.n_onus,
            "onu.q_w": o.q_w,
            "onu.delta_on_ns": o.delta_on,
            "onu.wake_lead_ns": o.wake_lead,
            "power.p_on": p.p_on,
            "power.p_off": p.p_off,
            "sim.warmup_ns": self.warmup,
        }


@dataclass(frozen=True)
class ExperimentPlan:
    loads: Tuple[float, ...] = DEFAULT_LOADS
    q_ws: Tuple[int, ...] = (10,)
    seeds: Tuple[int, ...] = tuple(range(1, 11))
    duration: int = 100 * NS_PER_S
    base: SimConfig = SimConfig()

    def __post_init__(self):
        if not self.loads:
            raise ConfigError("traffic.load", "no loads given")
        if not self.q_ws:
            raise ConfigError("onu.q_w", "no thresholds given")
        if not self.seeds:
            raise ConfigError("sim.seeds", "no seeds given")
        if self.duration <= 0:
            raise ConfigError("sim.duration_s", "duration must be positive")

    def points(self) -> List[Tuple[float, int]]:
        return [(load, q) for load in self.loads for q in self.q_ws]

    def triples(self) -> List[Tuple[float, int, int]]:
        return [(load, q, s) for load in self.loads for q in self.q_ws for s in self.seeds]


def _parse_float(s: str) -> float:
    return float(s)


def _parse_int(s: str) -> int:
    # allow 1_500_000 and 1e6-style integers written by hand
    s = s.replace("_", "")
    try:
        return int(s)
    except ValueError:
        f = float(s)
        if not f.is_integer():
            raise
        return int(f)


def _parse_list(conv: Callable[[str], object]) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        items = [x for x in s.replace(" ", "").split(",") if x]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(x) for x in items)
    return parse


# key -> converter; the ``traffic.load`` and ``onu.q_w`` keys take lists for sweeps
KEYS: Dict[str, Callable[[str], object]] = {
    "traffic.alpha": _parse_float,
    "traffic.frame_bytes": _parse_int,
    "traffic.load": _parse_list(_parse_float),
    "traffic.rate_bps": _parse_float,
    "traffic.seed": _parse_int,
    "dba.cycle_len_ns": _parse_int,
    "dba.cap_bytes": _parse_int,
    "dba.report_duration_ns": _parse_int,
    "dba.report_deadline_ns": _parse_int,
    "dba.line_rate_bps": _parse_int,
    "dba.n_onus": _parse_int,
    "onu.q_w": _parse_list(_parse_int),
    "onu.delta_on_ns": _parse_int,
    "onu.wake_lead_ns": _parse_int,
    "power.p_on": _parse_float,
    "power.p_off": _parse_float,
    "sim.duration_s": _parse_float,
    "sim.seeds": _parse_int,
    "sim.warmup_ns": _parse_int,
}


def read_config_file(path) -> Dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` starts a comment."""
    if not os.path.exists(path):
        raise ConfigError("--config", f"file not found: {path}")
    raw: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}", f"expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
    return raw


def parse_values(raw: Mapping[str, str]) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for key, value in raw.items():
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        try:
            out[key] = KEYS[key](str(value))
        except ValueError as exc:
            raise ConfigError(key, f"malformed value {value!r} ({exc})") from None
    return out


def build_plan(values: Mapping[str, object]) -> ExperimentPlan:
    """Turn parsed values into a validated plan. Missing keys take the defaults."""
    d = SimConfig()
    v = dict(values)

    def get(key, default):
        return v.get(key, default)

    loads = tuple(get("traffic.load", DEFAULT_LOADS))
    q_ws = tuple(get("onu.q_w", (d.onu.q_w,)))
    for load in loads:
        if not 0 < load < 1:
            raise ConfigError("traffic.load", f"load {load} outside (0, 1)")
    for q in q_ws:
        if q < 1:
            raise ConfigError("onu.q_w", f"q_w must be >= 1, got {q}")

    def build(key_prefix, ctor, kwargs):
        try:
            return ctor(**kwargs)
        except ValueError as exc:
            raise ConfigError(key_prefix, str(exc)) from None

    traffic = build("traffic", TrafficConfig, dict(
        alpha=get("traffic.alpha", d.traffic.alpha),
        frame_bytes=get("traffic.frame_bytes", d.traffic.frame_bytes),
        load=loads[0],
        rate_bps=get("traffic.rate_bps", d.traffic.rate_bps),
        seed=get("traffic.seed", d.traffic.seed),
    ))
    dba = build("dba", DbaConfig, dict(
        cycle_len=get("dba.cycle_len_ns", d.dba.cycle_len),
        cap_bytes_per_cycle=get("dba.cap_bytes", d.dba.cap_bytes_per_cycle),
        report_duration=get("dba.report_duration_ns", d.dba.report_duration),
        report_deadline=get("dba.report_deadline_ns", d.dba.report_deadline),
        line_rate_bps=get("dba.line_rate_bps", d.dba.line_rate_bps),
        n_onus=get("dba.n_onus", d.dba.n_onus),
    ))
    onu = build("onu", SleepConfig, dict(
        q_w=q_ws[0],
        delta_on=get("onu.delta_on_ns", d.onu.delta_on),
        wake_lead=get("onu.wake_lead_ns", d.onu.wake_lead),
    ))
    power = build("power", PowerProfile, dict(
        p_on=get("power.p_on", d.power.p_on),
        p_off=get("power.p_off", d.power.p_off),
    ))
    warmup = get("sim.warmup_ns", 0)
    if warmup < 0:
        raise ConfigError("sim.warmup_ns", "must be >= 0")
    duration_s = get("sim.duration_s", 100.0)
    if duration_s <= 0:
        raise ConfigError("sim.duration_s", "must be positive")
    n_seeds = get("sim.seeds", 10)
    if n_seeds < 1:
        raise ConfigError("sim.seeds", "need at least one seed")
    duration = round(duration_s * NS_PER_S)
    if warmup >= duration:
        raise ConfigError("sim.warmup_ns", "warm-up must be shorter than the run")
    base = SimConfig(traffic, dba, onu, power, warmup)
    seeds = tuple(traffic.seed + i for i in range(n_seeds))
    return ExperimentPlan(loads, q_ws, seeds, duration, base)


def parse_config(path: Optional[str] = None, overrides: Optional[Mapping[str, str]] = None) -> ExperimentPlan:
    """Config file (optional) merged with overrides; overrides win."""
    raw: Dict[str, str] = {}
    if path is not None:
        raw.update(read_config_file(path))
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return build_plan(parse_values(raw))


def format_value(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_from_flat(values: Mapping[str, str]) -> SimConfig:
    """Inverse of :meth:`SimConfig.flat` for a single run (used by trace readers)."""
    parsed = parse_values({k: v for k, v in values.items() if k in KEYS})
    return build_plan(parsed).base
