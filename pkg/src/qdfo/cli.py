"""Command-line entry point: ``qdfo opt|verify|stats|gen|sweep|validate``.

Exit codes: 0 success, 1 unreadable input, 2 invalid module, 3 a pass
failed, 4 traces differ or the interpreter reported a runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from . import __version__
from .cleanup import CleanupConfig
from .core.dce import DceKeywordList
from .corpus import EmitterStyle, LOOP_FORMS, builtin, emit_qir_text, load_circuit_file, scaling_circuit
from .errors import (
    ExternalOptFailed,
    FixpointNotReached,
    InvalidSpec,
    ParseError,
    PassInvariantBroken,
    QdfoError,
    SchemaError,
    StepBudgetExceeded,
    UnknownCorpusName,
    UnknownRuntimeFunction,
)
from .ir.model import QirModule
from .ir.parser import parse_module
from .ir.printer import print_module
from .ir.validate import validate
from .oracle.counting import count_idioms
from .oracle.interp import DEFAULT_BUDGET, first_divergence, interpret, trace_equal
from .preprocess import DEFAULT_CTL_INLINE_PATTERNS
from .workflow import PASS_NAMES, WorkflowConfig, run_workflow

log = logging.getLogger("qdfo")

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_PASS, EXIT_TRACE = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _csv(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _ints(text: str) -> list[int]:
    try:
        return [int(p) for p in _csv(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def read_module(path: str, check: bool = True) -> QirModule:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc.strerror or exc}") from None
    try:
        m = parse_module(text)
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"{path}:{exc.line}:{exc.col}: error: {exc.args[0]}") from None
    if check:
        problems = validate(m)
        if problems:
            lines = "\n".join(f"{path}: {p}" for p in problems[:20])
            raise CliError(EXIT_INVALID, f"{lines}\n{path}: {len(problems)} validation problem(s)")
    return m


def write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _workflow_config(args) -> WorkflowConfig:
    passes = None
    if getattr(args, "passes", None):
        passes = frozenset(_csv(args.passes))
    try:
        return WorkflowConfig(
            cleanup=CleanupConfig(max_unroll_trip_count=args.max_unroll, external_opt_command=args.external_opt),
            passes=passes,
            run_cleanup=not args.no_cleanup,
            dce_keywords=DceKeywordList(_csv(args.dce_keywords)) if args.dce_keywords else DceKeywordList(),
            ctl_inline_patterns=tuple(_csv(args.ctl_inline_patterns)) if args.ctl_inline_patterns
            else DEFAULT_CTL_INLINE_PATTERNS,
            max_qubits=args.max_qubits,
            max_iterations=args.max_iterations,
            validate_each=args.check_each,
        )
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None


def _trace(m: QirModule, args, label: str):
    try:
        return interpret(m, budget=args.budget, measurements=args.measurements, trap_unknown=args.trap_unknown)
    except (StepBudgetExceeded, UnknownRuntimeFunction) as exc:
        raise CliError(EXIT_TRACE, f"{label}: {exc}") from None


def _compare(before: QirModule, after: QirModule, args, names=("before", "after")) -> Optional[str]:
    """None when traces agree, else a human-readable explanation."""
    ta, tb = _trace(before, args, names[0]), _trace(after, args, names[1])
    for label, t in zip(names, (ta, tb)):
        if t.diagnostics:
            return f"{label}: runtime diagnostics:\n" + "\n".join(f"  {d}" for d in t.diagnostics)
    if trace_equal(ta, tb):
        return None
    k = first_divergence(ta, tb)
    ea = ta.events[k].dump() if k < len(ta.events) else "<end of trace>"
    eb = tb.events[k].dump() if k < len(tb.events) else "<end of trace>"
    return f"traces diverge at event {k}:\n  {names[0]}: {ea}\n  {names[1]}: {eb}"


def format_report_text(report, path: str = "") -> str:
    b, a = report.before, report.after
    lines = [f"{path or 'module'}: {report.iterations} iteration(s)"]
    lines.append(f"  {'':<14}{'before':>10}{'after':>10}")
    for key, label in (("loadOps", "loadOps"), ("createOps", "createOps"), ("instructions", "instructions")):
        lines.append(f"  {label:<14}{b[key]:>10}{a[key]:>10}")
    lines.append(f"  reduction     {report.reduction * 100:9.1f}%")
    totals = report.as_dict()["rewrites"]
    lines.append("  rewrites: " + ", ".join(f"{k}={v}" for k, v in totals.items()))
    if report.mmo_removed:
        lines.append(f"  memory-management calls removed: {report.mmo_removed}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_opt(args) -> int:
    m = read_module(args.input)
    original = m.clone() if args.verify else None
    cfg = _workflow_config(args)
    if args.no_cleanup:
        log.warning("--no-cleanup: mandated cleanup stages are skipped; results are for debugging only")
    try:
        report = run_workflow(m, cfg)
    except FixpointNotReached as exc:
        raise CliError(EXIT_PASS, f"{args.input}: {exc}") from None
    except ExternalOptFailed as exc:
        raise CliError(EXIT_PASS, f"{args.input}: {exc}") from None
    except PassInvariantBroken as exc:
        details = "\n".join(f"  {d}" for d in exc.diagnostics[:20])
        raise CliError(EXIT_PASS, f"{args.input}: {exc}\n{details}") from None
    write_text(args.output, print_module(m))
    doc = report.as_dict()
    doc["input"] = os.path.basename(args.input)
    if args.verify:
        problem = _compare(original, m, args)
        doc["verified"] = problem is None
        if problem is not None:
            sys.stderr.write(problem + "\n")
    if args.report:
        write_text(args.report, dump_json(doc))
    if args.format == "json":
        sys.stdout.write(dump_json(doc))
    elif args.stats or not args.report:
        if args.output != "-":
            sys.stdout.write(format_report_text(report, args.input))
    if args.show_diagnostics:
        for d in report.diagnostics:
            sys.stderr.write(f"{args.input}: {d}\n")
    if args.verify and not doc["verified"]:
        return EXIT_TRACE
    return EXIT_OK


def cmd_verify(args) -> int:
    before = read_module(args.before)
    after = read_module(args.after)
    problem = _compare(before, after, args, (args.before, args.after))
    if problem is not None:
        sys.stdout.write(problem + "\n")
        return EXIT_TRACE
    sys.stdout.write("traces equal\n")
    return EXIT_OK


def stats_doc(m: QirModule) -> dict:
    c = count_idioms(m)
    return c.as_dict()


def cmd_stats(args) -> int:
    m = read_module(args.input, check=False)
    doc = stats_doc(m)
    if args.format == "json":
        sys.stdout.write(dump_json(doc))
    else:
        for k in ("loadOps", "createOps", "instructions", "staticInstructions", "functions"):
            sys.stdout.write(f"{k}: {doc[k]}\n")
    return EXIT_OK


def _style(args) -> Optional[EmitterStyle]:
    if not (args.no_redundant_loads or args.no_redundant_creates or args.no_wrap or args.loop_form):
        return None
    return EmitterStyle(redundant_loads=not args.no_redundant_loads,
                        redundant_creates=not args.no_redundant_creates,
                        wrap_controlled_gates=not args.no_wrap,
                        loop_form=args.loop_form or "unrolledSource")


def cmd_gen(args) -> int:
    source = args.circuit
    try:
        if os.path.exists(source) or source.endswith(".json"):
            spec, style = load_circuit_file(source), EmitterStyle()
        else:
            entry = builtin(source, args.seed)
            spec, style = entry.spec, entry.style
        text = emit_qir_text(spec, _style(args) or style)
    except FileNotFoundError as exc:
        raise CliError(EXIT_PARSE, f"{source}: {exc.strerror}") from None
    except SchemaError as exc:
        raise CliError(EXIT_PARSE, f"{source}: schema error at {exc}") from None
    except (UnknownCorpusName, InvalidSpec) as exc:
        raise CliError(EXIT_PARSE, f"{source}: {exc}") from None
    write_text(args.output, text)
    return EXIT_OK


@dataclass
class SweepRow:
    gates: int
    instr_before: int
    instr_after: int
    reduction_ratio: float
    load_before: int
    load_after: int
    create_before: int
    create_after: int
    iterations: int
    verified: bool
    seconds: float

    def as_dict(self) -> dict:
        return {
            "gates": self.gates,
            "instrBefore": self.instr_before,
            "instrAfter": self.instr_after,
            "reductionRatio": round(self.reduction_ratio, 6),
            "loadOpsBefore": self.load_before,
            "loadOpsAfter": self.load_after,
            "createOpsBefore": self.create_before,
            "createOpsAfter": self.create_after,
            "iterations": self.iterations,
            "verified": self.verified,
        }


def sweep_one(n: int, seed: Optional[int] = None, budget: int = DEFAULT_BUDGET) -> SweepRow:
    """Generate, optimize and verify one scaling circuit."""
    t0 = time.perf_counter()
    m = parse_module(emit_qir_text(scaling_circuit(n, seed)))
    before = interpret(m, budget=budget)
    report = run_workflow(m)
    after = interpret(m, budget=budget)
    return SweepRow(n, report.before.instructions, report.after.instructions, report.reduction,
                    report.before.load_ops, report.after.load_ops, report.before.create_ops,
                    report.after.create_ops, report.iterations, trace_equal(before, after),
                    time.perf_counter() - t0)


def run_sweep(sizes: Sequence[int], seed: Optional[int] = None, jobs: int = 1,
              budget: int = DEFAULT_BUDGET) -> list[SweepRow]:
    if jobs <= 1 or len(sizes) <= 1:
        return [sweep_one(n, seed, budget) for n in sizes]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(sweep_one, sizes, [seed] * len(sizes), [budget] * len(sizes)))


def cmd_sweep(args) -> int:
    if any(n < 1 for n in args.sizes):
        raise CliError(EXIT_PARSE, "sweep sizes must be positive")
    jobs = args.jobs if args.jobs else min(len(args.sizes), os.cpu_count() or 1)
    try:
        rows = run_sweep(args.sizes, args.seed, jobs, args.budget)
    except QdfoError as exc:
        raise CliError(EXIT_PASS, str(exc)) from None
    if args.format == "json":
        sys.stdout.write(dump_json({"seed": args.seed, "rows": [r.as_dict() for r in rows]}))
    else:
        sys.stdout.write(f"{'gates':>7} {'instrBefore':>12} {'instrAfter':>11} {'reduction':>10} {'verified':>9}\n")
        for r in rows:
            sys.stdout.write(f"{r.gates:>7} {r.instr_before:>12} {r.instr_after:>11} "
                             f"{r.reduction_ratio * 100:>9.1f}% {str(r.verified):>9}\n")
    bad = [r.gates for r in rows if not r.verified]
    if bad:
        sys.stderr.write(f"verification failed for sizes {bad}\n")
        return EXIT_TRACE
    return EXIT_OK


def cmd_validate(args) -> int:
    read_module(args.input)
    sys.stdout.write(f"{args.input}: ok\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_trace_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--measurements", type=_ints, default=None, metavar="BITS",
                   help="fixed measurement outcomes, comma-separated, cycled (default: all zero)")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="interpreter step budget")
    p.add_argument("--trap-unknown", action="store_true",
                   help="fail on unknown runtime functions instead of ignoring them")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdfo", description="Dataflow-based optimizer for QIR programs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("opt", help="optimize a module")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="where to write the optimized module ('-' for stdout)")
    p.add_argument("--stats", action="store_true", help="print the before/after table")
    p.add_argument("--report", metavar="PATH", help="write the JSON report to PATH")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--passes", metavar="LIST", help=f"comma-separated subset of: {', '.join(PASS_NAMES)}")
    p.add_argument("--no-cleanup", action="store_true", help="skip the mandated cleanup stages (debugging)")
    p.add_argument("--verify", action="store_true", help="compare gate traces before and after")
    p.add_argument("--max-qubits", type=int, default=64, help="largest register the load merger will track")
    p.add_argument("--max-iterations", type=int, default=4)
    p.add_argument("--max-unroll", type=int, default=4096, help="largest trip count to unroll")
    p.add_argument("--dce-keywords", metavar="LIST", help="runtime-function keywords for dead-call removal")
    p.add_argument("--ctl-inline-patterns", metavar="LIST", help="name globs of functions to force inline")
    p.add_argument("--external-opt", metavar="CMD", help="replace cleanup by an external optimizer command")
    p.add_argument("--check-each", action="store_true", help="validate the module after every pass")
    p.add_argument("--show-diagnostics", action="store_true")
    _add_trace_flags(p)
    p.set_defaults(func=cmd_opt)

    p = sub.add_parser("verify", help="check two modules produce the same gate trace")
    p.add_argument("before")
    p.add_argument("after")
    _add_trace_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="count qubit loads, control-array builds and instructions")
    p.add_argument("input")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen", help="emit a builtin or file-described circuit as QIR")
    p.add_argument("circuit", help="builtin name (toffoli, grover_like, scaling_N, ...) or circuit file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=None, help="seed for random builtins")
    p.add_argument("--no-redundant-loads", action="store_true")
    p.add_argument("--no-redundant-creates", action="store_true")
    p.add_argument("--no-wrap", action="store_true", help="emit controlled gates inline, without wrappers")
    p.add_argument("--loop-form", choices=LOOP_FORMS, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sweep", help="reduction ratio across generated circuit sizes")
    p.add_argument("sizes", nargs="+", type=int)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: one per size, capped by CPUs)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="parse and validate a module")
    p.add_argument("input")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"{exc}\n")
        return exc.code
    except QdfoError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
