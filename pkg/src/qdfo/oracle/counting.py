"""Idiom and instruction counts weighted by how often each function runs.

Gate wrappers that are still out of line hold one copy of their idioms but
execute it at every call site, so a plain static count would under-report
the unoptimized program. Each function's counts are therefore multiplied
along the call graph from the roots, the same totals a full inliner would
produce.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

from ..core.creates import collect_create_ops
from ..ir.model import Function, GlobalVariable, Instruction, QirModule
from ..ir.names import CALLABLE_CREATE, CALLABLE_INVOKE, GEP, callee_canonical, is_call_to
from ..ir.types import QUBIT_PTR, QUBIT_PTR_PTR


@dataclass(frozen=True)
class IdiomCounts:
    load_ops: int = 0
    create_ops: int = 0
    instructions: int = 0
    static_instructions: int = 0
    functions: int = 0

    def as_dict(self) -> dict:
        return {
            "loadOps": self.load_ops,
            "createOps": self.create_ops,
            "instructions": self.instructions,
            "staticInstructions": self.static_instructions,
            "functions": self.functions,
        }

    def __getitem__(self, key: str) -> int:
        return self.as_dict()[key]


def is_load_op(inst: Instruction) -> bool:
    """A %Qubit* load through a bitcast of an element-pointer call."""
    if inst.opcode != "load" or inst.type != QUBIT_PTR:
        return False
    bc = inst.operands[0]
    return (isinstance(bc, Instruction) and bc.opcode == "bitcast" and bc.type == QUBIT_PTR_PTR
            and isinstance(bc.operands[0], Instruction) and is_call_to(bc.operands[0], GEP))


def _local(f: Function) -> tuple[int, int, int]:
    loads = sum(1 for i in f.instructions() if is_load_op(i))
    return loads, len(collect_create_ops(f)), f.instruction_count()


def _edges(f: Function) -> dict[Function, int]:
    """Callee multiplicities, counting table functions once per invoke of their callable."""
    out: dict[Function, int] = {}
    invokes: dict[Instruction, int] = {}
    creates = []
    for inst in f.instructions():
        if inst.opcode != "call":
            continue
        if is_call_to(inst, CALLABLE_INVOKE):
            c = inst.operands[0]
            invokes[c] = invokes.get(c, 0) + 1
        elif is_call_to(inst, CALLABLE_CREATE):
            creates.append(inst)
        if inst.callee is not None and not inst.callee.is_declaration:
            out[inst.callee] = out.get(inst.callee, 0) + 1
    for c in creates:
        table = c.operands[0] if c.operands else None
        n = invokes.get(c, 0)
        if n and isinstance(table, GlobalVariable) and table.initializer is not None:
            for slot in getattr(table.initializer, "elements", ()):
                if isinstance(slot, Function) and not slot.is_declaration:
                    out[slot] = out.get(slot, 0) + n
    return out


def count_idioms(m: QirModule, roots: Optional[list[Function]] = None) -> IdiomCounts:
    defined = m.defined_functions()
    if not defined:
        return IdiomCounts()
    local = {f: _local(f) for f in defined}
    edges = {f: _edges(f) for f in defined}
    if roots is None:
        roots = [f for f in defined if "EntryPoint" in f.attrs]
        if not roots:
            called = {g for f in defined for g in edges[f] if g is not f}
            roots = [f for f in defined if f not in called]
    memo: dict[Function, tuple[int, int, int]] = {}
    active: set[Function] = set()

    def total(f: Function) -> tuple[int, int, int]:
        if f in memo:
            return memo[f]
        if f in active:
            return (0, 0, 0)
        active.add(f)
        acc = list(local[f])
        for g, n in edges[f].items():
            sub = total(g)
            for k in range(3):
                acc[k] += n * sub[k]
        active.discard(f)
        memo[f] = tuple(acc)
        return memo[f]

    sums = [0, 0, 0]
    for r in roots:
        t = total(r)
        for k in range(3):
            sums[k] += t[k]
    return IdiomCounts(sums[0], sums[1], sums[2], m.instruction_count(), len(defined))
