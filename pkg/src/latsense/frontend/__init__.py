"""Trace and schedule ingestion, collective expansion, synthetic workloads."""

from .collectives import (COLLECTIVE_TAG_BASE, CollectiveAlgorithm,
                          expand_collective)
from .goal import parse_goal, serialize_goal
from .program import Calc, Recv, ScheduleOp, ScheduleProgram, Send
from .trace import (Trace, TraceOp, TraceRecord, parse_trace, schedule_from_trace,
                    serialize_trace)
from .workloads import generate_workload, random_dag

__all__ = [
    "COLLECTIVE_TAG_BASE", "Calc", "CollectiveAlgorithm", "Recv", "ScheduleOp",
    "ScheduleProgram", "Send", "Trace", "TraceOp", "TraceRecord", "expand_collective",
    "generate_workload", "parse_goal", "parse_trace", "random_dag",
    "schedule_from_trace", "serialize_goal", "serialize_trace",
]
