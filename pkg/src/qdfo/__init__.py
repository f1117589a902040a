"""Dataflow-based optimization for QIR.

Typical use::

    from qdfo import parse_module, run_workflow, print_module
    m = parse_module(text)
    report = run_workflow(m)
    print(report.before.load_ops, "->", report.after.load_ops)
"""

__version__ = "0.1.0"

from .cleanup import CleanupConfig, CleanupSummary, run_cleanup
from .corpus import CircuitSpec, EmitterStyle, GateSpec, builtin, builtin_corpus, emit_qir, emit_qir_text
from .ir import QirModule, parse_file, parse_module, print_module, validate
from .oracle import count_idioms, interpret, trace_equal
from .workflow import OptimizationReport, WorkflowConfig, run_workflow

__all__ = [
    "__version__", "CleanupConfig", "CleanupSummary", "run_cleanup", "CircuitSpec", "EmitterStyle",
    "GateSpec", "builtin", "builtin_corpus", "emit_qir", "emit_qir_text", "QirModule", "parse_file",
    "parse_module", "print_module", "validate", "count_idioms", "interpret", "trace_equal",
    "OptimizationReport", "WorkflowConfig", "run_workflow",
]
