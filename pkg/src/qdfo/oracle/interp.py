"""Operational interpreter producing gate traces.

The interpreter models just enough of the QIR runtime to observe which
gates run on which qubits: arrays with alias and reference counts, tuples,
callables and fixed measurement outcomes. Runtime errors (use after
release, out-of-bounds access) are recorded as diagnostics and stop the
run; a trace with diagnostics never compares equal to anything.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import count
from typing import Iterable, Optional, Sequence

from ..cleanup import fold_binop, fold_icmp
from ..errors import StepBudgetExceeded, UnknownRuntimeFunction
from ..ir.model import (
    ArrayConst,
    BasicBlock,
    Function,
    GlobalVariable,
    Instruction,
    IntConst,
    NullConst,
    QirModule,
    RangeConst,
    Value,
)
from ..ir.names import canonical, gate_variant, is_gate
from ..ir.types import IntType, PointerType, QUBIT_PTR, ARRAY_PTR

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2_000_000


@dataclass(frozen=True, order=True)
class QubitHandle:
    alloc_id: int
    index: int

    def __str__(self) -> str:
        return f"q{self.alloc_id}[{self.index}]"


@dataclass(frozen=True)
class ResultVal:
    bit: int


@dataclass(eq=False)
class ArrayObject:
    id: int
    elements: list
    elem_size: int = 8
    alias_count: int = 0
    reference_count: int = 1
    released: bool = False
    qubit_register: bool = False


@dataclass(eq=False)
class TupleObject:
    id: int
    size: int
    fields: dict = field(default_factory=dict)
    alias_count: int = 0
    reference_count: int = 1
    released: bool = False


@dataclass(eq=False)
class CallableObject:
    id: int
    table: Optional[GlobalVariable]
    capture: object
    adjoint: bool = False
    controlled: int = 0
    alias_count: int = 0
    reference_count: int = 1
    released: bool = False


@dataclass(frozen=True)
class Pointer:
    container: object
    path: tuple = ()


@dataclass(frozen=True)
class GateEvent:
    gate: str
    controls: frozenset
    targets: tuple

    def dump(self) -> str:
        ctl = ", ".join(str(q) for q in sorted(self.controls))
        tgt = ", ".join(str(q) for q in self.targets)
        return f"{self.gate}({{{ctl}}}, [{tgt}])"


@dataclass
class RuntimeDiagnostic:
    code: str
    message: str
    function: str = ""
    location: str = ""

    def __str__(self) -> str:
        where = f"@{self.function} {self.location}: " if self.function else ""
        return f"{where}{self.code}: {self.message}"


@dataclass
class GateTrace:
    events: list[GateEvent] = field(default_factory=list)
    diagnostics: list[RuntimeDiagnostic] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    watched: dict = field(default_factory=dict)
    steps: int = 0

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def dump(self) -> str:
        return "\n".join(e.dump() for e in self.events)


def trace_equal(a: GateTrace, b: GateTrace) -> bool:
    """Equal gate sequences, controls compared as sets, and no diagnostics."""
    if a.diagnostics or b.diagnostics:
        return False
    if len(a.events) != len(b.events):
        return False
    return all(x.gate == y.gate and x.targets == y.targets and x.controls == y.controls
               for x, y in zip(a.events, b.events))


def first_divergence(a: GateTrace, b: GateTrace) -> Optional[int]:
    for k, (x, y) in enumerate(zip(a.events, b.events)):
        if not (x.gate == y.gate and x.targets == y.targets and x.controls == y.controls):
            return k
    if len(a.events) != len(b.events):
        return min(len(a.events), len(b.events))
    return None


def range_indices(start: int, step: int, end: int) -> list[int]:
    if step == 0:
        from ..errors import ZeroStep

        raise ZeroStep("range step must be non-zero")
    if step > 0:
        return list(range(start, end + 1, step)) if start <= end else []
    return list(range(start, end - 1, step)) if start >= end else []


class _Halt(Exception):
    pass


_MEASURE_NAMES = ("qis__m__body", "qis__mz__body", "qis__measure__body", "qis__mresetz__body")


class Interpreter:
    def __init__(self, m: QirModule, *, budget: int = DEFAULT_BUDGET,
                 measurements: Optional[Sequence[int]] = None, trap_unknown: bool = False,
                 watch: Optional[Iterable[Instruction]] = None):
        self.module = m
        self.budget = budget
        self.outcomes = list(measurements or [])
        self._measured = 0
        self.trap_unknown = trap_unknown
        self.watch = set(watch) if watch else set()
        self.trace = GateTrace()
        self._ids = count()
        self._allocs = count()
        self._released_qubits: set[QubitHandle] = set()
        self._fn: Optional[Function] = None
        self._where = ""
        self._warned: set[str] = set()

    # -- diagnostics ----------------------------------------------------

    def fail(self, code: str, message: str):
        fn = self._fn.name if self._fn is not None else ""
        self.trace.diagnostics.append(RuntimeDiagnostic(code, message, fn, self._where))
        raise _Halt()

    def _live(self, obj, what: str):
        if obj is None:
            self.fail("NullDereference", f"{what} on a null reference")
        if getattr(obj, "released", False):
            self.fail("UseAfterRelease", f"{what} on a released {type(obj).__name__}")
        return obj

    # -- driver ---------------------------------------------------------

    def run(self, entry: Optional[str] = None) -> GateTrace:
        fn = self._entry(entry)
        try:
            self.call(fn, [])
        except _Halt:
            pass
        return self.trace

    def _entry(self, entry: Optional[str]) -> Function:
        if entry is not None:
            fn = self.module.get_function(entry)
            if fn is None or fn.is_declaration:
                raise ValueError(f"no defined function @{entry}")
        else:
            roots = self.module.entry_points()
            if not roots:
                raise ValueError("module has no entry function")
            fn = roots[0]
        if fn.params:
            raise ValueError(f"entry @{fn.name} takes parameters")
        return fn

    def call(self, fn: Function, args: list):
        saved_fn, saved_where = self._fn, self._where
        self._fn = fn
        env: dict[Value, object] = dict(zip(fn.params, args))
        block = fn.entry
        prev: Optional[BasicBlock] = None
        trace = self.trace
        while True:
            insts = block.instructions
            start = 0
            if prev is not None and insts and insts[0].opcode == "phi":
                vals = []
                while start < len(insts) and insts[start].opcode == "phi":
                    phi = insts[start]
                    try:
                        k = phi.incoming.index(prev)
                    except ValueError:
                        self._where = f"{block.name}#{start}"
                        self.fail("BadPhi", f"no incoming value for block {prev.name}")
                    vals.append((phi, self.value(phi.operands[k], env)))
                    start += 1
                for phi, v in vals:
                    env[phi] = v
            nxt = None
            for k in range(start, len(insts)):
                inst = insts[k]
                trace.steps += 1
                if trace.steps > self.budget:
                    raise StepBudgetExceeded(self.budget)
                op = inst.opcode
                if op == "br":
                    if inst.operands:
                        c = self.value(inst.operands[0], env)
                        nxt = inst.targets[0] if c else inst.targets[1]
                    else:
                        nxt = inst.targets[0]
                    break
                if op == "ret":
                    result = self.value(inst.operands[0], env) if inst.operands else None
                    self._fn, self._where = saved_fn, saved_where
                    return result
                self._where = f"{block.name}#{k}"
                v = self.execute(inst, env)
                if inst.name is not None:
                    env[inst] = v
                    if inst in self.watch:
                        trace.watched.setdefault(inst, []).append(v)
            if nxt is None:
                self.fail("FellOffBlock", f"block {block.name} has no terminator")
            prev, block = block, nxt

    def value(self, v: Value, env: dict):
        if isinstance(v, IntConst):
            return v.value
        if isinstance(v, NullConst):
            return None
        if isinstance(v, RangeConst):
            return v.triple
        if isinstance(v, (GlobalVariable, Function)):
            return v
        try:
            return env[v]
        except KeyError:
            self.fail("UndefinedValue", f"%{v.name} used before definition")

    # -- instructions ---------------------------------------------------

    def execute(self, inst: Instruction, env: dict):
        op = inst.opcode
        ops = inst.operands
        if op == "call":
            args = [self.value(a, env) for a in ops]
            callee = inst.callee
            if not callee.is_declaration:
                return self.call(callee, args)
            return self.runtime(canonical(callee.name), args, inst)
        if op == "load":
            ptr = self.value(ops[0], env)
            return self._load(ptr)
        if op == "store":
            val = self.value(ops[0], env)
            ptr = self.value(ops[1], env)
            self._store(ptr, val)
            return None
        if op == "bitcast":
            return self.value(ops[0], env)
        if op == "getelementptr":
            base = self.value(ops[0], env)
            idx = [self.value(i, env) for i in ops[1:]]
            if isinstance(base, TupleObject):
                base = Pointer(base, ())
            if not isinstance(base, Pointer):
                self.fail("BadPointer", "getelementptr on a non-object pointer")
            if idx[0] != 0:
                self.fail("BadPointer", "pointer arithmetic beyond the object")
            return Pointer(base.container, base.path + tuple(idx[1:]))
        if op == "icmp":
            a = self.value(ops[0], env)
            b = self.value(ops[1], env)
            if isinstance(ops[0].type, IntType):
                return 1 if fold_icmp(inst.pred, a, b, ops[0].type.width) else 0
            if inst.pred == "eq":
                return 1 if a is b or a == b else 0
            if inst.pred == "ne":
                return 0 if a is b or a == b else 1
            self.fail("BadCompare", "ordered comparison of references")
        if op in ("add", "sub", "mul"):
            a = self.value(ops[0], env)
            b = self.value(ops[1], env)
            return fold_binop(op, a, b, inst.type.width)
        self.fail("UnknownOpcode", op)

    def _load(self, ptr):
        if not isinstance(ptr, Pointer):
            self.fail("NullDereference" if ptr is None else "BadPointer", "load through an invalid pointer")
        obj = self._live(ptr.container, "load")
        if isinstance(obj, ArrayObject):
            (k,) = ptr.path
            return obj.elements[k]
        if isinstance(obj, TupleObject):
            if ptr.path not in obj.fields:
                self.fail("UninitializedRead", f"tuple field {ptr.path} read before written")
            return obj.fields[ptr.path]
        self.fail("BadPointer", "load from an unsupported object")

    def _store(self, ptr, val):
        if not isinstance(ptr, Pointer):
            self.fail("NullDereference" if ptr is None else "BadPointer", "store through an invalid pointer")
        obj = self._live(ptr.container, "store")
        if isinstance(obj, ArrayObject):
            (k,) = ptr.path
            obj.elements[k] = val
        elif isinstance(obj, TupleObject):
            obj.fields[ptr.path] = val
        else:
            self.fail("BadPointer", "store to an unsupported object")

    # -- runtime library ------------------------------------------------

    def new_array(self, elements: list, elem_size: int = 8) -> ArrayObject:
        return ArrayObject(next(self._ids), elements, elem_size)

    def _array(self, v, what: str) -> ArrayObject:
        if not isinstance(v, ArrayObject):
            if v is None:
                self.fail("NullDereference", f"{what} on a null array")
            self.fail("BadArgument", f"{what} expects an array")
        return self._live(v, what)

    def _qubit(self, v, what: str) -> QubitHandle:
        if not isinstance(v, QubitHandle):
            self.fail("BadArgument", f"{what} expects a qubit, got {type(v).__name__}")
        if v in self._released_qubits:
            self.fail("UseAfterRelease", f"{what} on released qubit {v}")
        return v

    def _count(self, obj, delta: int, attr: str, what: str):
        if obj is None:
            return None
        self._live(obj, what)
        if attr == "alias_count":
            obj.alias_count += delta
            if obj.alias_count < 0:
                self.fail("NegativeAliasCount", f"{what} drove the alias count below zero")
        else:
            obj.reference_count += delta
            if obj.reference_count < 0:
                self.fail("NegativeReferenceCount", f"{what} drove the reference count below zero")
            if obj.reference_count == 0:
                obj.released = True
        return None

    def runtime(self, name: str, args: list, inst: Instruction):
        if is_gate(name):
            return self.gate(name, args, inst)
        if name == "qubit_allocate_array":
            alloc = next(self._allocs)
            arr = self.new_array([QubitHandle(alloc, i) for i in range(args[0])])
            arr.qubit_register = True
            return arr
        if name == "qubit_allocate":
            return QubitHandle(next(self._allocs), 0)
        if name == "qubit_release_array":
            arr = self._array(args[0], "qubit_release_array")
            for q in arr.elements:
                if isinstance(q, QubitHandle):
                    self._released_qubits.add(q)
            arr.released = True
            return None
        if name == "qubit_release":
            self._released_qubits.add(self._qubit(args[0], "qubit_release"))
            return None
        if name == "array_create_1d":
            return self.new_array([None] * args[1], args[0])
        if name == "array_get_element_ptr_1d":
            arr = self._array(args[0], "array_get_element_ptr_1d")
            k = args[1]
            if not 0 <= k < len(arr.elements):
                self.fail("IndexOutOfBounds", f"index {k} outside array of length {len(arr.elements)}")
            return Pointer(arr, (k,))
        if name == "array_get_size_1d":
            return len(self._array(args[0], "array_get_size_1d").elements)
        if name == "array_slice_1d":
            arr = self._array(args[0], "array_slice_1d")
            start, step, end = args[1]
            if step == 0:
                self.fail("ZeroStep", "slice with zero step")
            idx = range_indices(start, step, end)
            for k in idx:
                if not 0 <= k < len(arr.elements):
                    self.fail("IndexOutOfBounds", f"slice index {k} outside array of length {len(arr.elements)}")
            return self.new_array([arr.elements[k] for k in idx], arr.elem_size)
        if name == "array_copy":
            if args[0] is None:
                return None
            arr = self._array(args[0], "array_copy")
            return self.new_array(list(arr.elements), arr.elem_size)
        if name == "array_concatenate":
            a = self._array(args[0], "array_concatenate")
            b = self._array(args[1], "array_concatenate")
            return self.new_array(a.elements + b.elements, a.elem_size)
        if name == "array_update_alias_count":
            return self._count(args[0], args[1], "alias_count", name)
        if name == "array_update_reference_count":
            return self._count(args[0], args[1], "reference_count", name)
        if name == "tuple_create":
            return TupleObject(next(self._ids), args[0])
        if name == "tuple_copy":
            t = self._live(args[0], name)
            return TupleObject(next(self._ids), t.size, dict(t.fields))
        if name == "tuple_update_reference_count":
            return self._count(args[0], args[1], "reference_count", name)
        if name == "tuple_update_alias_count":
            return self._count(args[0], args[1], "alias_count", name)
        if name == "callable_create":
            table = args[0]
            return CallableObject(next(self._ids), table if isinstance(table, GlobalVariable) else None, args[2])
        if name == "callable_copy":
            c = self._live(args[0], name)
            return CallableObject(next(self._ids), c.table, c.capture, c.adjoint, c.controlled)
        if name == "callable_make_adjoint":
            c = self._live(args[0], name)
            c.adjoint = not c.adjoint
            return None
        if name == "callable_make_controlled":
            c = self._live(args[0], name)
            c.controlled += 1
            return None
        if name == "callable_update_reference_count":
            return self._count(args[0], args[1], "reference_count", name)
        if name == "callable_update_alias_count":
            return self._count(args[0], args[1], "alias_count", name)
        if name in ("capture_update_reference_count", "capture_update_alias_count"):
            return None
        if name == "callable_invoke":
            return self.invoke(args)
        if name in ("result_get_zero", "result_get_one"):
            return ResultVal(0 if name.endswith("zero") else 1)
        if name == "result_equal":
            a, b = args
            return 1 if isinstance(a, ResultVal) and isinstance(b, ResultVal) and a.bit == b.bit else 0
        if name in ("result_update_reference_count", "string_update_reference_count"):
            return None
        if name == "read_result":
            return 1 if isinstance(args[0], ResultVal) and args[0].bit else 0
        return self.unknown(name, inst)

    def unknown(self, name: str, inst: Instruction):
        if self.trap_unknown:
            raise UnknownRuntimeFunction(name)
        if name not in self._warned:
            self._warned.add(name)
            self.trace.warnings.append(f"treating unknown runtime function {name} as a no-op")
            log.warning("treating unknown runtime function %s as a no-op", name)
        if isinstance(inst.type, IntType):
            return 0
        return None

    def invoke(self, args: list):
        c = self._live(args[0], "callable_invoke")
        if not isinstance(c, CallableObject) or c.table is None:
            self.fail("BadCallable", "callable_invoke on an unknown callable")
        slot = (2 if c.controlled else 0) + (1 if c.adjoint else 0)
        init = c.table.initializer
        if not isinstance(init, ArrayConst) or slot >= len(init.elements):
            self.fail("BadCallable", f"function table @{c.table.name} lacks slot {slot}")
        target = init.elements[slot]
        if not isinstance(target, Function):
            self.fail("BadCallable", f"slot {slot} of @{c.table.name} is empty")
        if target.is_declaration:
            self.fail("BadCallable", f"@{target.name} has no body")
        return self.call(target, [c.capture, args[1], args[2]])

    def gate(self, name: str, args: list, inst: Instruction):
        variant = gate_variant(name)
        controls: frozenset = frozenset()
        rest = list(zip(inst.operands, args))
        if variant in ("ctl", "ctladj") and rest and rest[0][0].type == ARRAY_PTR:
            arr = self._array(rest[0][1], name)
            qs = []
            for q in arr.elements:
                qs.append(self._qubit(q, name))
            controls = frozenset(qs)
            rest = rest[1:]
        targets = []
        for operand, v in rest:
            if operand.type == QUBIT_PTR:
                targets.append(self._qubit(v, name))
            elif operand.type == ARRAY_PTR and isinstance(v, ArrayObject):
                self._live(v, name)
                targets.extend(self._qubit(q, name) for q in v.elements)
        if controls & set(targets):
            self.fail("ControlTargetOverlap", f"{name} uses a qubit as both control and target")
        self.trace.events.append(GateEvent(name, controls, tuple(targets)))
        if name in _MEASURE_NAMES or name.startswith("qis__m__") or name.startswith("qis__measure"):
            bit = self.outcomes[self._measured % len(self.outcomes)] if self.outcomes else 0
            self._measured += 1
            if isinstance(inst.type, PointerType):
                return ResultVal(bit)
            if isinstance(inst.type, IntType):
                return bit
        if isinstance(inst.type, IntType):
            return 0
        return None


def interpret(m: QirModule, entry: Optional[str] = None, budget: int = DEFAULT_BUDGET, *,
              measurements: Optional[Sequence[int]] = None, trap_unknown: bool = False,
              watch: Optional[Iterable[Instruction]] = None) -> GateTrace:
    """Run ``entry`` (default: the module's entry point) and return its gate trace."""
    return Interpreter(m, budget=budget, measurements=measurements, trap_unknown=trap_unknown,
                       watch=watch).run(entry)
