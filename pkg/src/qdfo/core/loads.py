"""Recognition and merging of duplicate qubit loads."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Optional

from ..dataflow import DefUse, DominatorInfo, Order, is_before, reverse_postorder
from ..errors import Diagnostic, DominanceViolation
from ..ir.model import Function, Instruction, IntConst, Value
from ..ir.names import (
    ARRAY_READ_ONLY,
    GEP,
    QUBIT_ALLOC_ARRAY,
    SLICE,
    TUPLE_CREATE,
    callee_canonical,
    is_call_to,
    is_management,
)
from ..ir.types import QUBIT_PTR, QUBIT_PTR_PTR
from .slices import SliceInfo, allocation_size, find_slice

DEFAULT_MAX_QUBITS = 64


@dataclass
class LoadOpDesc:
    gep_call: Instruction
    bitcast: Instruction
    load_inst: Instruction
    source_array: Value
    index: int
    resolved_qubit: int
    allocation: Instruction


def _resolve(source: Value, index: int, slices: list[SliceInfo]):
    if isinstance(source, Instruction) and is_call_to(source, QUBIT_ALLOC_ARRAY):
        size = allocation_size(source)
        if size is not None and not 0 <= index < size:
            return None
        return source, index
    if isinstance(source, Instruction) and is_call_to(source, SLICE):
        s = find_slice(slices, source)
        if s is None or not 0 <= index < len(s.q_ref):
            return None
        return s.slice_from_i, s.q_ref[index]
    return None


def collect_load_ops(f: Function, slices: list[SliceInfo], diagnostics: Optional[list] = None,
                     du: Optional[DefUse] = None) -> list[LoadOpDesc]:
    """All complete gep, bitcast, load idioms over a known qubit array."""
    du = du or DefUse(f)
    out: list[LoadOpDesc] = []
    for inst in f.instructions():
        if not is_call_to(inst, GEP) or len(inst.operands) != 2:
            continue
        src, idx = inst.operands
        loads = [(bc, ld) for bc in du.users(inst) if bc.opcode == "bitcast" and bc.type == QUBIT_PTR_PTR
                 for ld in du.users(bc) if ld.opcode == "load" and ld.type == QUBIT_PTR and ld.operands[0] is bc]
        if not loads:
            continue
        if not isinstance(idx, IntConst):
            _diag(diagnostics, "DynamicIndex", "qubit load with a non-constant index", f, inst)
            continue
        where = _resolve(src, idx.value, slices)
        if where is None:
            _diag(diagnostics, "UnknownSource", "qubit load from an array of unknown provenance", f, inst)
            continue
        alloc, q = where
        for bc, ld in loads:
            out.append(LoadOpDesc(inst, bc, ld, src, idx.value, q, alloc))
    return out


def _family(alloc: Instruction, slices: list[SliceInfo]) -> list[Value]:
    return [alloc] + [s.slice_i for s in slices if s.slice_from_i is alloc]


def _barriers(f: Function, family: list[Value], du: DefUse) -> tuple[list[Instruction], bool]:
    """Instructions that might change which qubit sits in a slot of the family.

    Returns (barriers, escaped). ``escaped`` means some member flows somewhere
    we cannot follow, so no merge is safe.
    """
    barriers: list[Instruction] = []
    escaped = False
    for member in family:
        for use in du.uses(member):
            user = use.user
            if user.opcode == "call":
                name = callee_canonical(user)
                if name not in ARRAY_READ_ONLY:
                    barriers.append(user)
                elif name == GEP:
                    for bc in du.users(user):
                        if bc.opcode != "bitcast":
                            if bc.opcode != "load":
                                escaped = True
                            continue
                        for x in du.users(bc):
                            if x.opcode == "store" and x.operands[1] is bc:
                                barriers.append(x)
                            elif x.opcode == "store":
                                escaped = True
                            elif x.opcode not in ("load",):
                                escaped = True
            elif not (user.opcode == "store" and use.index == 0 and _into_dead_tuple(user, du)):
                escaped = True
    return barriers, escaped


def _into_dead_tuple(store: Instruction, du: DefUse) -> bool:
    """True when ``store`` writes a field of a fresh tuple that nothing reads."""
    gep = store.operands[1]
    if not (isinstance(gep, Instruction) and gep.opcode == "getelementptr"):
        return False
    bc = gep.operands[0]
    if not (isinstance(bc, Instruction) and bc.opcode == "bitcast"):
        return False
    t = bc.operands[0]
    if not (isinstance(t, Instruction) and is_call_to(t, TUPLE_CREATE)):
        return False
    for user in du.users(t):
        if user.opcode == "call":
            if not (is_management(callee_canonical(user)) and user.operands[0] is t):
                return False
            continue
        if user.opcode != "bitcast":
            return False
        for g in du.users(user):
            if g.opcode != "getelementptr" or g.operands[0] is not user:
                return False
            if any(not (x.opcode == "store" and x.operands[1] is g) for x in du.users(g)):
                return False
    return True


def qdfo_load(f: Function, loads: list[LoadOpDesc], slices: list[SliceInfo], *,
              diagnostics: Optional[list] = None, max_qubits: int = DEFAULT_MAX_QUBITS) -> int:
    """Redirect every duplicate qubit load to the earliest load that dominates it."""
    if not loads:
        return 0
    dom = DominatorInfo(f)
    du = DefUse(f)
    rpo_index = {b: i for i, b in enumerate(reverse_postorder(f))}
    groups: dict[tuple, list[LoadOpDesc]] = {}
    for d in loads:
        groups.setdefault((d.allocation, d.resolved_qubit), []).append(d)
    family_info: dict[Instruction, tuple] = {}
    merges = 0
    for (alloc, q), group in groups.items():
        if len(group) < 2:
            continue
        size = allocation_size(alloc)
        if size is not None and size > max_qubits:
            _diag(diagnostics, "QubitTableLimit",
                  f"allocation of {size} qubits exceeds the limit of {max_qubits}", f, alloc)
            continue
        if alloc not in family_info:
            barriers, escaped = _barriers(f, _family(alloc, slices), du)
            per_block: dict = {}
            for b in barriers:
                per_block.setdefault(b.parent, []).append(b.ordinal)
            for v in per_block.values():
                v.sort()
            family_info[alloc] = (barriers, escaped, per_block)
        barriers, escaped, per_block = family_info[alloc]
        if escaped:
            _diag(diagnostics, "ArrayEscapes", "qubit array escapes; loads left unmerged", f, alloc)
            continue
        group.sort(key=lambda d: (rpo_index.get(d.load_inst.parent, 1 << 30), d.load_inst.ordinal))
        reps: list[LoadOpDesc] = []
        for d in group:
            target = None
            for r in reps:
                order = is_before(r.load_inst, d.load_inst, dom)
                if order is not Order.A_BEFORE_B:
                    if order is Order.UNORDERED:
                        _diag(diagnostics, "UnorderedLoads", "duplicate loads on sibling paths", f, d.load_inst)
                    continue
                a, b = r.load_inst, d.load_inst
                if a.parent is b.parent:
                    ords = per_block.get(a.parent, [])
                    k = bisect.bisect_right(ords, a.ordinal)
                    if k < len(ords) and ords[k] < b.ordinal:
                        continue
                elif barriers:
                    continue
                target = r
                break
            if target is None:
                reps.append(d)
                continue
            try:
                _checked_replace(du, dom, d.load_inst, target.load_inst)
            except DominanceViolation:
                _diag(diagnostics, "DominanceViolation", "merge skipped", f, d.load_inst)
                reps.append(d)
                continue
            merges += 1
    f.renumber()
    return merges


def _checked_replace(du: DefUse, dom: DominatorInfo, old: Instruction, new: Instruction) -> int:
    sites = du.uses(old)
    for s in sites:
        if not dom.inst_dominates(new, s.user, s.index):
            raise DominanceViolation(f"%{new.name} does not dominate a use of %{old.name}", s)
    return du.replace(old, new)


def _diag(diagnostics, code, message, f, inst):
    if diagnostics is not None:
        diagnostics.append(Diagnostic(code, message, f.name, f"%{inst.name}" if inst.name else inst.opcode))
