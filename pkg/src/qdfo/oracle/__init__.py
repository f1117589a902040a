"""Reference oracles: the gate-trace interpreter and idiom counters."""

from .counting import IdiomCounts, count_idioms, is_load_op
from .interp import (
    GateEvent,
    GateTrace,
    Interpreter,
    QubitHandle,
    RuntimeDiagnostic,
    first_divergence,
    interpret,
    trace_equal,
)

__all__ = [
    "IdiomCounts", "count_idioms", "is_load_op", "GateEvent", "GateTrace", "Interpreter",
    "QubitHandle", "RuntimeDiagnostic", "first_divergence", "interpret", "trace_equal",
]
