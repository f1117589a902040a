"""Preprocessing: devirtualize callables, pin array sizes, tag gate wrappers."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass
from typing import Iterable, Optional

from .core.slices import compute_slices, find_slice
from .dataflow import DefUse
from .errors import Diagnostic
from .ir.model import ArrayConst, Function, GlobalVariable, Instruction, IntConst, NullConst, QirModule, Value
from .ir.names import (
    ARRAY_CREATE,
    CALLABLE_CREATE,
    CALLABLE_INVOKE,
    GET_SIZE,
    MAKE_ADJOINT,
    MAKE_CONTROLLED,
    QUBIT_ALLOC_ARRAY,
    SLICE,
    callee_canonical,
    is_call_to,
    is_gate,
    is_management,
)
from .ir.types import I64, TUPLE_PTR, VOID

DEFAULT_CTL_INLINE_PATTERNS = ("*__ctl", "*__ctladj", "*swap*")
WRAPPER_SLOTS = ("body", "adj", "ctl", "ctladj")
ALWAYSINLINE = "alwaysinline"


@dataclass
class WrapperBinding:
    callable_create: Instruction
    function_table: GlobalVariable
    wrapper_kind: str
    arg_tuple: Value

    @property
    def wrapper(self) -> Function:
        return self.function_table.initializer.elements[WRAPPER_SLOTS.index(self.wrapper_kind)]


def _diag(diagnostics, code, message, f, inst=None):
    if diagnostics is not None:
        where = None if inst is None else (f"%{inst.name}" if inst.name else inst.opcode)
        diagnostics.append(Diagnostic(code, message, f.name, where))


def _table_slots(g) -> Optional[list]:
    if not isinstance(g, GlobalVariable) or not isinstance(g.initializer, ArrayConst):
        return None
    slots = g.initializer.elements
    return slots if len(slots) == 4 else None


def _binding(invoke: Instruction, du: DefUse, f: Function, diagnostics) -> Optional[WrapperBinding]:
    c = invoke.operands[0]
    if not (isinstance(c, Instruction) and is_call_to(c, CALLABLE_CREATE)):
        _diag(diagnostics, "CallableNotLocal", "callable does not come from a local callable_create", f, invoke)
        return None
    table = c.operands[0] if c.operands else None
    slots = _table_slots(table)
    if slots is None:
        _diag(diagnostics, "UnknownFunctionTable", "callable_create over a non-constant table", f, invoke)
        return None
    if len(c.operands) > 2 and not isinstance(c.operands[2], NullConst):
        _diag(diagnostics, "CaptureTuple", "callable captures values; left as is", f, invoke)
        return None
    for user in du.users(c):
        name = callee_canonical(user)
        if name in (MAKE_ADJOINT, MAKE_CONTROLLED):
            _diag(diagnostics, "SpecializedCallable", f"callable passes through {name}; left as is", f, invoke)
            return None
        if user is invoke or (is_management(name) and user.operands[0] is c):
            continue
        if name == CALLABLE_INVOKE and user.operands[0] is c:
            continue
        _diag(diagnostics, "CallableEscapes", "callable flows into other code; left as is", f, invoke)
        return None
    body = slots[0]
    if not isinstance(body, Function):
        _diag(diagnostics, "MissingBody", "function table has no body wrapper", f, invoke)
        return None
    if len(body.param_types) != 3 or any(t != TUPLE_PTR for t in body.param_types) or body.ret_type != VOID:
        _diag(diagnostics, "WrapperSignature", f"@{body.name} is not a tuple wrapper", f, invoke)
        return None
    return WrapperBinding(c, table, "body", invoke.operands[1])


def _replace_in_block(old: Instruction, new: Instruction) -> None:
    block = old.parent
    k = block.instructions.index(old)
    block.instructions[k] = new
    new.parent = block
    new.ordinal = old.ordinal
    old.parent = None


def qir_inline(m: QirModule, diagnostics: Optional[list] = None) -> int:
    """Turn invokes of locally created callables into direct body-wrapper calls."""
    rewrites = 0
    for f in m.defined_functions():
        invokes = [i for i in f.instructions() if is_call_to(i, CALLABLE_INVOKE) and len(i.operands) == 3]
        if not invokes:
            continue
        du = DefUse(f)
        for inv in invokes:
            b = _binding(inv, du, f, diagnostics)
            if b is None:
                continue
            args = [NullConst(TUPLE_PTR), inv.operands[1], inv.operands[2]]
            if args[1].type != TUPLE_PTR or args[2].type != TUPLE_PTR:
                _diag(diagnostics, "WrapperSignature", "invoke operands are not tuples", f, inv)
                continue
            call = Instruction("call", args, VOID, callee=b.wrapper, attrs=inv.attrs - {"tail"})
            _replace_in_block(inv, call)
            rewrites += 1
    return rewrites


def _known_length(a: Value, slices) -> Optional[int]:
    if not isinstance(a, Instruction):
        return None
    if is_call_to(a, QUBIT_ALLOC_ARRAY) and isinstance(a.operands[0], IntConst):
        return a.operands[0].value
    if is_call_to(a, ARRAY_CREATE) and len(a.operands) == 2 and isinstance(a.operands[1], IntConst):
        return a.operands[1].value
    if is_call_to(a, SLICE):
        s = find_slice(slices, a)
        return None if s is None else len(s.q_ref)
    return None


def qir_loop_unroll_prep(m: QirModule, diagnostics: Optional[list] = None) -> int:
    """Replace uses of ``array_get_size_1d`` results by the array's known length."""
    sites = 0
    for f in m.defined_functions():
        calls = [i for i in f.instructions() if is_call_to(i, GET_SIZE) and i.operands]
        if not calls:
            continue
        du = DefUse(f)
        slices = compute_slices(f) if any(is_call_to(i, SLICE) for i in f.instructions()) else []
        for call in calls:
            n = _known_length(call.operands[0], slices)
            if n is None:
                continue
            if du.replace(call, IntConst(call.type if call.type != VOID else I64, n)):
                sites += 1
    return sites


def _wraps_single_ctl(f: Function) -> bool:
    gates = [i for i in f.instructions() if i.opcode == "call" and is_gate(callee_canonical(i))]
    return len(gates) == 1 and callee_canonical(gates[0]).endswith(("__ctl", "__ctladj"))


def qir_ctl_inline(m: QirModule, patterns: Optional[Iterable[str]] = None) -> int:
    """Flag controlled-gate and SWAP functions ``alwaysinline``; returns how many gained it."""
    pats = [p.lower() for p in (DEFAULT_CTL_INLINE_PATTERNS if patterns is None else patterns) if p]
    tagged = 0
    for f in m.defined_functions():
        if ALWAYSINLINE in f.attrs:
            continue
        name = f.name.lower()
        hit = any(fnmatch.fnmatchcase(name, p) for p in pats)
        if not hit and fnmatch.fnmatchcase(name, "*intrinsic__*__body"):
            hit = _wraps_single_ctl(f)
        if hit:
            f.attrs.discard("noinline")
            f.attrs.add(ALWAYSINLINE)
            tagged += 1
    return tagged
