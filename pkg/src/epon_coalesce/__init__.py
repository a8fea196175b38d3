"""Discrete-event model of an EPON upstream channel with ONU sleep and packet coalescing."""

from .config import ExperimentPlan, SimConfig, parse_config
from .simulation import RunResult, simulate
from .sweep import emit_plotdata, run_experiment
from .validate import validate

__all__ = ["ExperimentPlan", "SimConfig", "parse_config", "RunResult", "simulate",
           "emit_plotdata", "run_experiment", "validate"]
__version__ = "0.1.0"
