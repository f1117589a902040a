"""Helpers shared by the test modules: random generators and reference checks."""

from __future__ import annotations

import random
from functools import lru_cache

from qdfo.core.dce import DceKeywordList
from qdfo.dataflow import DominatorInfo
from qdfo.ir import Instruction, QirModule, parse_module, print_module
from qdfo.ir.names import callee_canonical, is_management
from qdfo.ir.types import VOID

RT = "@__quantum__rt__"
QIS = "@__quantum__qis__"

DCE_DECLS = """
declare %Array* @__quantum__rt__qubit_allocate_array(i64)
declare void @__quantum__rt__qubit_release_array(%Array*)
declare i8* @__quantum__rt__array_get_element_ptr_1d(%Array*, i64)
declare %Array* @__quantum__rt__array_slice_1d(%Array*, %Range, i1)
declare i64 @__quantum__rt__array_get_size_1d(%Array*)
declare %Array* @__quantum__rt__array_create_1d(i32, i64)
declare void @__quantum__rt__array_update_alias_count(%Array*, i32)
declare void @__quantum__rt__array_update_reference_count(%Array*, i32)
declare %Tuple* @__quantum__rt__tuple_create(i64)
declare void @__quantum__rt__tuple_update_reference_count(%Tuple*, i32)
declare void @__quantum__qis__h__body(%Qubit*)
declare void @__quantum__qis__x__ctl(%Array*, %Qubit*)
"""


class _FnBuilder:
    def __init__(self, rng: random.Random, n: int):
        self.rng = rng
        self.n = n
        self.lines: list[str] = []
        self.tmp = 0
        self.arrays = ["%qs"]
        self.qubits: list[str] = []
        self.ints: list[str] = []

    def fresh(self, stem: str) -> str:
        self.tmp += 1
        return f"%{stem}{self.tmp}"

    def emit(self, text: str) -> None:
        self.lines.append("  " + text)

    def load(self, array: str, index: str) -> str:
        p, c, q = self.fresh("p"), self.fresh("c"), self.fresh("q")
        self.emit(f"{p} = call i8* {RT}array_get_element_ptr_1d(%Array* {array}, i64 {index})")
        self.emit(f"{c} = bitcast i8* {p} to %Qubit**")
        self.emit(f"{q} = load %Qubit*, %Qubit** {c}, align 8")
        self.qubits.append(q)
        return q

    def step(self) -> None:
        r = self.rng
        kind = r.choice(["slice", "load", "load", "gate", "size", "arith", "dynload",
                         "mgmt", "create", "tuple"])
        if kind == "slice":
            s = self.fresh("s")
            self.emit(f"{s} = call %Array* {RT}array_slice_1d(%Array* %qs, "
                      f"%Range {{ i64 0, i64 1, i64 {self.n - 1} }}, i1 true)")
            self.arrays.append(s)
        elif kind == "load":
            self.load(r.choice(self.arrays), str(r.randrange(self.n)))
        elif kind == "gate" and self.qubits:
            self.emit(f"call void {QIS}h__body(%Qubit* {r.choice(self.qubits)})")
        elif kind == "size":
            v = self.fresh("n")
            self.emit(f"{v} = call i64 {RT}array_get_size_1d(%Array* {r.choice(self.arrays)})")
            self.ints.append(v)
        elif kind == "arith" and self.ints:
            v = self.fresh("a")
            self.emit(f"{v} = sub i64 {r.choice(self.ints)}, 1")
            self.ints.append(v)
        elif kind == "dynload" and self.ints:
            self.load(r.choice(self.arrays), r.choice(self.ints))
        elif kind == "mgmt":
            which = r.choice(["alias", "reference"])
            self.emit(f"call void {RT}array_update_{which}_count(%Array* {r.choice(self.arrays)}, "
                      f"i32 {r.choice([1, -1])})")
        elif kind == "create" and self.qubits:
            a, p, c = self.fresh("ctl"), self.fresh("p"), self.fresh("c")
            self.emit(f"{a} = call %Array* {RT}array_create_1d(i32 8, i64 1)")
            self.emit(f"{p} = call i8* {RT}array_get_element_ptr_1d(%Array* {a}, i64 0)")
            self.emit(f"{c} = bitcast i8* {p} to %Qubit**")
            self.emit(f"store %Qubit* {r.choice(self.qubits)}, %Qubit** {c}, align 8")
            if r.random() < 0.6:
                self.emit(f"call void {QIS}x__ctl(%Array* {a}, %Qubit* {r.choice(self.qubits)})")
        elif kind == "tuple" and self.qubits:
            t, c = self.fresh("t"), self.fresh("c")
            self.emit(f"{t} = call %Tuple* {RT}tuple_create(i64 8)")
            self.emit(f"{c} = bitcast %Tuple* {t} to %Qubit**")
            self.emit(f"store %Qubit* {r.choice(self.qubits)}, %Qubit** {c}, align 8")
            if r.random() < 0.4:
                q = self.fresh("q")
                self.emit(f"{q} = load %Qubit*, %Qubit** {c}, align 8")
                self.qubits.append(q)
            if r.random() < 0.5:
                self.emit(f"call void {RT}tuple_update_reference_count(%Tuple* {t}, i32 -1)")


def random_dce_function(seed: int, max_instructions: int = 60) -> str:
    """A small random function mixing live and dead runtime-call clusters."""
    rng = random.Random(seed)
    b = _FnBuilder(rng, rng.randint(2, 6))
    b.emit(f"%qs = call %Array* {RT}qubit_allocate_array(i64 {b.n})")
    branch = rng.random() < 0.5
    budget = max_instructions - (8 if branch else 3)
    while True:
        saved = [list(x) for x in (b.lines, b.arrays, b.qubits, b.ints)]
        b.step()
        if len(b.lines) > budget:
            b.lines, b.arrays, b.qubits, b.ints = saved
            break
    tail = []
    if branch and b.ints:
        tail.append(f"  %cond = icmp eq i64 {rng.choice(b.ints)}, {b.n}")
        tail.append("  br i1 %cond, label %then, label %done")
        tail.append("then:")
        if b.qubits:
            tail.append(f"  call void {QIS}h__body(%Qubit* {rng.choice(b.qubits)})")
        tail.append("  br label %done")
        tail.append("done:")
    tail.append(f"  call void {RT}qubit_release_array(%Array* %qs)")
    tail.append("  ret void")
    return ("%Qubit = type opaque\n%Array = type opaque\n%Tuple = type opaque\n"
            "%Range = type { i64, i64, i64 }\n\n"
            "define void @f() #0 {\nentry:\n" + "\n".join(b.lines + tail) + "\n}\n" + DCE_DECLS
            + '\nattributes #0 = { "EntryPoint" }\n')


FRESH = ("tuple_create", "callable_create")


def _base(v):
    while isinstance(v, Instruction) and v.opcode in ("bitcast", "getelementptr"):
        v = v.operands[0]
    return v


def oracle_dead_set(f, keywords=None) -> set:
    """Instructions with no effect on any root, by fixpoint marking.

    Roots are terminators, calls with effects (gates, allocation, release,
    array construction), and stores into anything but a fresh tuple.
    Bookkeeping calls and stores into fresh tuples live only if their
    object does; everything else lives only if a live instruction uses it.
    """
    kw = keywords or DceKeywordList()
    insts = list(f.instructions())
    conditional = {}
    live = set()
    for i in insts:
        if i.is_terminator:
            live.add(i)
        elif i.opcode == "call":
            name = callee_canonical(i)
            if is_management(name):
                conditional[i] = i.operands[0]
            elif not (kw.matches(name) and i.type != VOID):
                live.add(i)
        elif i.opcode == "store":
            base = _base(i.operands[1])
            if isinstance(base, Instruction) and callee_canonical(base) in FRESH:
                conditional[i] = base
            else:
                live.add(i)
    changed = True
    while changed:
        changed = False
        for i in list(live):
            for op in i.operands:
                if isinstance(op, Instruction) and op not in live:
                    live.add(op)
                    changed = True
        for i, obj in conditional.items():
            if i not in live and (not isinstance(obj, Instruction) or obj in live):
                live.add(i)
                changed = True
    return {i for i in insts if i not in live}


def back_edges(f) -> list:
    dom = DominatorInfo(f)
    return [(b, s) for b in f.blocks for s in b.successors if dom.reachable(b) and dom.dominates(s, b)]


def roundtrips(m: QirModule) -> bool:
    text = print_module(m)
    return print_module(parse_module(text)) == text


@lru_cache(maxsize=None)
def builtin_text(name: str) -> str:
    from qdfo.corpus import builtin

    return builtin(name).emit_text()
