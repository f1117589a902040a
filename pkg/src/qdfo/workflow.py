"""The full optimization driver, repeated until the module stops changing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .cleanup import CleanupConfig, CleanupSummary, run_cleanup
from .core.creates import collect_create_ops, qdfo_create_ex
from .core.dce import DceKeywordList, qir_dce
from .core.loads import DEFAULT_MAX_QUBITS, collect_load_ops, qdfo_load
from .core.slices import compute_slices
from .errors import Diagnostic, FixpointNotReached, PassInvariantBroken
from .ir.model import QirModule
from .ir.printer import print_module
from .ir.validate import validate
from .oracle.counting import IdiomCounts, count_idioms
from .preprocess import DEFAULT_CTL_INLINE_PATTERNS, qir_ctl_inline, qir_inline, qir_loop_unroll_prep

log = logging.getLogger(__name__)

QIR_INLINE = "qir-inline"
LOOP_UNROLL_PREP = "loop-unroll-prep"
QDFO_LOAD = "qdfo-load"
QIR_DCE = "qir-dce"
CTL_INLINE = "ctl-inline"
QDFO_CREATE = "qdfo-create"
CLEANUP = "cleanup"

PASS_NAMES = (QIR_INLINE, LOOP_UNROLL_PREP, QDFO_LOAD, QIR_DCE, CTL_INLINE, QDFO_CREATE)

# Stage order inside one iteration; None marks a mandated cleanup.
SCHEDULE = (
    QIR_INLINE, LOOP_UNROLL_PREP, None,
    QDFO_LOAD, None,
    QIR_DCE, CTL_INLINE, None,
    QDFO_CREATE, None,
)

DEFAULT_MAX_ITERATIONS = 4


@dataclass
class WorkflowConfig:
    cleanup: CleanupConfig = field(default_factory=CleanupConfig)
    passes: Optional[frozenset] = None  # None runs every pass
    run_cleanup: bool = True
    dce_keywords: DceKeywordList = field(default_factory=DceKeywordList)
    ctl_inline_patterns: tuple = DEFAULT_CTL_INLINE_PATTERNS
    max_qubits: int = DEFAULT_MAX_QUBITS
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    run_mmo: bool = True
    validate_each: bool = False

    def __post_init__(self):
        if self.passes is not None:
            unknown = set(self.passes) - set(PASS_NAMES)
            if unknown:
                raise ValueError(f"unknown pass {sorted(unknown)[0]!r}; choose from {', '.join(PASS_NAMES)}")
            self.passes = frozenset(self.passes)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.max_qubits < 1:
            raise ValueError("max_qubits must be at least 1")

    def enabled(self, name: str) -> bool:
        return self.passes is None or name in self.passes


@dataclass
class PassRecord:
    iteration: int
    name: str
    rewrites: int
    instructions_before: int
    instructions_after: int

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "pass": self.name,
            "rewrites": self.rewrites,
            "instructionsBefore": self.instructions_before,
            "instructionsAfter": self.instructions_after,
        }


@dataclass
class OptimizationReport:
    before: IdiomCounts = field(default_factory=IdiomCounts)
    after: IdiomCounts = field(default_factory=IdiomCounts)
    iterations: int = 0
    passes: list[PassRecord] = field(default_factory=list)
    mmo_removed: int = 0
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def rewrites(self, name: str) -> int:
        return sum(p.rewrites for p in self.passes if p.name == name)

    def first(self, name: str) -> int:
        """Rewrites made by ``name`` in the first iteration."""
        return sum(p.rewrites for p in self.passes if p.name == name and p.iteration == 1)

    @property
    def reduction(self) -> float:
        b = self.before.instructions
        return 0.0 if b == 0 else (b - self.after.instructions) / b

    def as_dict(self) -> dict:
        totals = {name: self.rewrites(name) for name in PASS_NAMES + (CLEANUP,)}
        return {
            "before": self.before.as_dict(),
            "after": self.after.as_dict(),
            "iterations": self.iterations,
            "reductionRatio": round(self.reduction, 6),
            "mmoRemoved": self.mmo_removed,
            "rewrites": totals,
            "passes": [p.as_dict() for p in self.passes],
            "diagnostics": [str(d) for d in self.diagnostics],
        }


StageHook = Callable[[str, QirModule], None]


class _Runner:
    def __init__(self, m: QirModule, cfg: WorkflowConfig, report: OptimizationReport,
                 on_stage: Optional[StageHook]):
        self.m = m
        self.cfg = cfg
        self.report = report
        self.on_stage = on_stage

    def stage(self, iteration: int, name: str, fn: Callable[[], int]) -> None:
        before = self.m.instruction_count()
        n = fn()
        self.report.passes.append(PassRecord(iteration, name, n, before, self.m.instruction_count()))
        if self.cfg.validate_each:
            problems = validate(self.m)
            if problems:
                raise PassInvariantBroken(name, problems)
        if self.on_stage is not None:
            self.on_stage(name, self.m)

    def cleanup(self) -> int:
        s: CleanupSummary = run_cleanup(self.m, self.cfg.cleanup)
        self.report.diagnostics.extend(s.diagnostics)
        return s.total

    def loads(self) -> int:
        n = 0
        for f in self.m.defined_functions():
            slices = compute_slices(f, self.report.diagnostics)
            loads = collect_load_ops(f, slices, self.report.diagnostics)
            n += qdfo_load(f, loads, slices, diagnostics=self.report.diagnostics, max_qubits=self.cfg.max_qubits)
        return n

    def dce(self) -> int:
        return sum(qir_dce(f, self.cfg.dce_keywords, self.report.diagnostics) for f in self.m.defined_functions())

    def creates(self) -> int:
        n = 0
        for f in self.m.defined_functions():
            cq = collect_create_ops(f, self.report.diagnostics)
            res = qdfo_create_ex(f, cq, run_mmo=self.cfg.run_mmo, diagnostics=self.report.diagnostics)
            n += res.merges
            self.report.mmo_removed += res.mmo_removed
        return n

    def iteration(self, k: int) -> None:
        d = self.report.diagnostics
        actions = {
            QIR_INLINE: lambda: qir_inline(self.m, d),
            LOOP_UNROLL_PREP: lambda: qir_loop_unroll_prep(self.m, d),
            QDFO_LOAD: self.loads,
            QIR_DCE: self.dce,
            CTL_INLINE: lambda: qir_ctl_inline(self.m, self.cfg.ctl_inline_patterns),
            QDFO_CREATE: self.creates,
        }
        for name in SCHEDULE:
            if name is None:
                if self.cfg.run_cleanup:
                    self.stage(k, CLEANUP, self.cleanup)
            elif self.cfg.enabled(name):
                self.stage(k, name, actions[name])


def run_workflow(m: QirModule, cfg: Optional[WorkflowConfig] = None, *,
                 on_stage: Optional[StageHook] = None) -> OptimizationReport:
    """Optimize ``m`` in place; iterate until an iteration leaves it unchanged.

    The confirming iteration counts, so a module that is done after the
    first round reports two iterations.
    """
    cfg = cfg or WorkflowConfig()
    report = OptimizationReport(before=count_idioms(m))
    if not m.defined_functions():
        report.after = report.before
        return report
    if not cfg.run_cleanup:
        log.warning("cleanup disabled: QDFO passes will see uncanonicalized IR")
    runner = _Runner(m, cfg, report, on_stage)
    text = print_module(m)
    for k in range(1, cfg.max_iterations + 1):
        runner.iteration(k)
        report.iterations = k
        new_text = print_module(m)
        if new_text == text:
            break
        text = new_text
    else:
        report.after = count_idioms(m)
        err = FixpointNotReached(cfg.max_iterations)
        err.report = report
        raise err
    report.after = count_idioms(m)
    return report


def run_passes(m: QirModule, names: Iterable[str], cfg: Optional[WorkflowConfig] = None, *,
               on_stage: Optional[StageHook] = None) -> OptimizationReport:
    """Run only ``names`` (plus mandated cleanup) to a fixpoint."""
    base = cfg or WorkflowConfig()
    sub = WorkflowConfig(cleanup=base.cleanup, passes=frozenset(names), run_cleanup=base.run_cleanup,
                         dce_keywords=base.dce_keywords, ctl_inline_patterns=base.ctl_inline_patterns,
                         max_qubits=base.max_qubits, max_iterations=base.max_iterations,
                         run_mmo=base.run_mmo, validate_each=base.validate_each)
    return run_workflow(m, sub, on_stage=on_stage)
