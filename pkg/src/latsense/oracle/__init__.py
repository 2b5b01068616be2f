"""Independent ground truth: event-driven replay and an exact DP envelope."""

from .dp import MAX_VERTICES, PiecewiseLinear, dp_breakpoints
from .simulator import EventKind, SimEvent, SimResult, simulate

__all__ = ["EventKind", "MAX_VERTICES", "PiecewiseLinear", "SimEvent", "SimResult",
           "dp_breakpoints", "simulate"]
