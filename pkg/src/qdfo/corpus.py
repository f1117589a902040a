"""Circuit descriptions and an emitter for compiler-style redundant QIR.

The emitter reproduces the habits of a straightforward frontend: every gate
reloads its qubits from the register, every controlled gate builds a fresh
control array inside an out-of-line wrapper, and per-qubit layers become
loops bounded by a runtime size query.
"""

from __future__ import annotations

import json
import os
import random
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .errors import InvalidSpec, SchemaError, UnknownCorpusName
from .ir.model import QirModule
from .ir.parser import parse_module

GATE_ARITY = {"H": 1, "X": 1, "T": 1, "Tdg": 1, "CNOT": 2, "SWAP": 2, "CCX": 3}
ONE_QUBIT = ("H", "X", "T", "Tdg")
LOOP_FORMS = ("unrolledSource", "runtimeSizeLoop")


@dataclass(frozen=True)
class GateSpec:
    kind: str
    qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))


@dataclass(frozen=True)
class Layer:
    """A one-qubit gate applied to every qubit of the register."""

    kind: str


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))


@dataclass(frozen=True)
class Invoke:
    """Gates packaged as a callable over the whole register and invoked once."""

    name: str
    body: tuple

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))


Item = Union[GateSpec, Layer, Repeat, Invoke]


@dataclass
class CircuitSpec:
    n_qubits: int
    gates: list = field(default_factory=list)
    name: str = "circuit"

    def validate(self) -> None:
        if not isinstance(self.n_qubits, int) or self.n_qubits < 1:
            raise InvalidSpec("nQubits must be a positive integer")
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", self.name):
            raise InvalidSpec(f"circuit name {self.name!r} is not an identifier")
        _check_items(self.gates, self.n_qubits, "gates", in_callable=False)

    def items(self):
        """Every item, Repeat bodies expanded and Invoke bodies inlined."""
        return _walk(self.gates)

    @property
    def gate_count(self) -> int:
        """Gates as written, layers counting once per qubit."""
        n = 0
        for it in self.items():
            n += self.n_qubits if isinstance(it, Layer) else 1
        return n

    def primitive_gates(self) -> list[GateSpec]:
        out: list[GateSpec] = []
        for it in self.items():
            if isinstance(it, Layer):
                out.extend(GateSpec(it.kind, (q,)) for q in range(self.n_qubits))
            else:
                out.extend(expand(it))
        return out

    @property
    def primitive_count(self) -> int:
        return len(self.primitive_gates())

    @property
    def has_layers(self) -> bool:
        return any(isinstance(it, Layer) for it in self.items())


def _walk(items):
    for it in items:
        if isinstance(it, Repeat):
            for _ in range(it.count):
                yield from _walk(it.body)
        elif isinstance(it, Invoke):
            yield from _walk(it.body)
        else:
            yield it


def _check_items(items, n: int, where: str, in_callable: bool) -> None:
    for k, it in enumerate(items):
        here = f"{where}[{k}]"
        if isinstance(it, GateSpec):
            if it.kind not in GATE_ARITY:
                raise InvalidSpec(f"{here}: unknown gate kind {it.kind!r}")
            if len(it.qubits) != GATE_ARITY[it.kind]:
                raise InvalidSpec(f"{here}: {it.kind} takes {GATE_ARITY[it.kind]} qubits, got {len(it.qubits)}")
            for q in it.qubits:
                if not isinstance(q, int) or not 0 <= q < n:
                    raise InvalidSpec(f"{here}: qubit index {q} outside 0..{n - 1}")
            if len(set(it.qubits)) != len(it.qubits):
                raise InvalidSpec(f"{here}: repeated qubit in {it.kind}")
        elif isinstance(it, Layer):
            if in_callable:
                raise InvalidSpec(f"{here}: layers are not supported inside callables")
            if it.kind not in ONE_QUBIT:
                raise InvalidSpec(f"{here}: layer gate must be one of {', '.join(ONE_QUBIT)}")
        elif isinstance(it, Repeat):
            if not isinstance(it.count, int) or it.count < 0:
                raise InvalidSpec(f"{here}: repeat count must be a non-negative integer")
            _check_items(it.body, n, here + ".body", in_callable)
        elif isinstance(it, Invoke):
            if in_callable:
                raise InvalidSpec(f"{here}: nested callables are not supported")
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", it.name):
                raise InvalidSpec(f"{here}: callable name {it.name!r} is not an identifier")
            _check_items(it.body, n, here + ".body", True)
        else:
            raise InvalidSpec(f"{here}: unrecognized item {it!r}")


def toffoli_decomposition(a: int, b: int, c: int) -> list[GateSpec]:
    """Clifford+T expansion of a Toffoli with controls a, b and target c."""
    seq = [
        ("H", c), ("CNOT", b, c), ("Tdg", c), ("CNOT", a, c), ("T", c), ("CNOT", b, c),
        ("Tdg", c), ("CNOT", a, c), ("T", b), ("T", c), ("CNOT", a, b), ("H", c),
        ("T", a), ("Tdg", b), ("CNOT", a, b),
    ]
    return [GateSpec(s[0], s[1:]) for s in seq]


def expand(g: GateSpec) -> list[GateSpec]:
    """Rewrite SWAP and CCX into the primitive gate set."""
    if g.kind == "CCX":
        return toffoli_decomposition(*g.qubits)
    if g.kind == "SWAP":
        a, b = g.qubits
        return [GateSpec("CNOT", (a, b)), GateSpec("CNOT", (b, a)), GateSpec("CNOT", (a, b))]
    return [g]


@dataclass(frozen=True)
class EmitterStyle:
    redundant_loads: bool = True
    redundant_creates: bool = True
    wrap_controlled_gates: bool = True
    loop_form: str = "unrolledSource"

    def validate(self, spec: Optional[CircuitSpec] = None) -> None:
        if self.loop_form not in LOOP_FORMS:
            raise InvalidSpec(f"loop form must be one of {', '.join(LOOP_FORMS)}")
        if spec is not None and self.loop_form == "runtimeSizeLoop" and not spec.has_layers:
            raise InvalidSpec("runtimeSizeLoop needs at least one layer in the circuit")


def expected_counts(spec: CircuitSpec) -> dict:
    """Idiom counts the redundant, wrapped style must produce for ``spec``."""
    prims = spec.primitive_gates()
    return {
        "loadOps": sum(len(g.qubits) for g in prims),
        "createOps": sum(1 for g in prims if g.kind == "CNOT"),
    }


# ---------------------------------------------------------------------------
# emission

RT = "__quantum__rt__"
QIS = "__quantum__qis__"
WRAPPER_TY = "void (%Tuple*, %Tuple*, %Tuple*)*"
TABLE_TY = f"[4 x {WRAPPER_TY}]"
MEM_TABLE_TY = "[2 x void (%Tuple*, i32)*]"

DECLS = {
    "qubit_allocate_array": "declare %Array* @__quantum__rt__qubit_allocate_array(i64)",
    "qubit_release_array": "declare void @__quantum__rt__qubit_release_array(%Array*)",
    "array_update_alias_count": "declare void @__quantum__rt__array_update_alias_count(%Array*, i32)",
    "array_update_reference_count": "declare void @__quantum__rt__array_update_reference_count(%Array*, i32)",
    "array_get_element_ptr_1d": "declare i8* @__quantum__rt__array_get_element_ptr_1d(%Array*, i64)",
    "array_create_1d": "declare %Array* @__quantum__rt__array_create_1d(i32, i64)",
    "array_get_size_1d": "declare i64 @__quantum__rt__array_get_size_1d(%Array*)",
    "array_slice_1d": "declare %Array* @__quantum__rt__array_slice_1d(%Array*, %Range, i1)",
    "callable_create": f"declare %Callable* @__quantum__rt__callable_create({TABLE_TY}*, {MEM_TABLE_TY}*, %Tuple*)",
    "callable_invoke": "declare void @__quantum__rt__callable_invoke(%Callable*, %Tuple*, %Tuple*)",
    "capture_update_reference_count": "declare void @__quantum__rt__capture_update_reference_count(%Callable*, i32)",
    "callable_update_reference_count":
        "declare void @__quantum__rt__callable_update_reference_count(%Callable*, i32)",
    "tuple_create": "declare %Tuple* @__quantum__rt__tuple_create(i64)",
    "tuple_update_reference_count": "declare void @__quantum__rt__tuple_update_reference_count(%Tuple*, i32)",
    "qis__h__body": "declare void @__quantum__qis__h__body(%Qubit*)",
    "qis__x__body": "declare void @__quantum__qis__x__body(%Qubit*)",
    "qis__t__body": "declare void @__quantum__qis__t__body(%Qubit*)",
    "qis__t__adj": "declare void @__quantum__qis__t__adj(%Qubit*)",
    "qis__x__ctl": "declare void @__quantum__qis__x__ctl(%Array*, %Qubit*)",
}

ONE_QUBIT_QIS = {"H": "qis__h__body", "X": "qis__x__body", "T": "qis__t__body", "Tdg": "qis__t__adj"}
CNOT_WRAPPER = "Microsoft__Quantum__Intrinsic__CNOT__body"


def _callee(canon: str) -> str:
    return "@" + (QIS + canon[5:] if canon.startswith("qis__") else RT + canon)


class _Body:
    """Text of one function under construction."""

    def __init__(self, emitter: "_Emitter", array: str):
        self.e = emitter
        self.array = array
        self.lines: list[str] = []
        self.next_tmp = 0
        self.block = "entry"
        self.cached: dict[int, str] = {}
        self.shared_ctl: dict[str, str] = {}
        self.loops = 0

    def tmp(self) -> str:
        name = f"%{self.next_tmp}"
        self.next_tmp += 1
        return name

    def emit(self, text: str) -> None:
        self.lines.append("  " + text)

    def call(self, canon: str, args: str, ret: str = "void") -> Optional[str]:
        self.e.use(canon)
        if ret == "void":
            self.emit(f"call void {_callee(canon)}({args})")
            return None
        r = self.tmp()
        self.emit(f"{r} = call {ret} {_callee(canon)}({args})")
        return r

    def load(self, index: str, cacheable: Optional[int] = None) -> str:
        if cacheable is not None and not self.e.style.redundant_loads and cacheable in self.cached:
            return self.cached[cacheable]
        p = self.call("array_get_element_ptr_1d", f"%Array* {self.array}, i64 {index}", "i8*")
        b = self.tmp()
        self.emit(f"{b} = bitcast i8* {p} to %Qubit**")
        q = self.tmp()
        self.emit(f"{q} = load %Qubit*, %Qubit** {b}, align 8")
        if cacheable is not None:
            self.cached[cacheable] = q
        return q

    def gate(self, g: GateSpec) -> None:
        qs = [self.load(str(q), q) for q in g.qubits]
        if g.kind in ONE_QUBIT_QIS:
            self.call(ONE_QUBIT_QIS[g.kind], f"%Qubit* {qs[0]}")
        else:
            self.cnot(qs[0], qs[1])

    def cnot(self, control: str, target: str) -> None:
        style = self.e.style
        if not style.redundant_creates:
            arr = self.shared_ctl.get(control)
            if arr is None:
                arr = self.e.control_array(self, control)
                self.call("array_update_alias_count", f"%Array* {arr}, i32 1")
                self.shared_ctl[control] = arr
            self.call("qis__x__ctl", f"%Array* {arr}, %Qubit* {target}")
        elif style.wrap_controlled_gates:
            self.e.need_cnot_wrapper = True
            self.emit(f"call void @{CNOT_WRAPPER}(%Qubit* {control}, %Qubit* {target})")
        else:
            self.e.controlled_x(self, control, target)

    def release_shared(self) -> None:
        for arr in self.shared_ctl.values():
            self.call("array_update_alias_count", f"%Array* {arr}, i32 -1")
            self.call("array_update_reference_count", f"%Array* {arr}, i32 -1")

    def layer(self, kind: str) -> None:
        k = self.loops
        self.loops += 1
        n = self.call("array_get_size_1d", f"%Array* {self.array}", "i64")
        head, body, done = f"loop{k}.header", f"loop{k}.body", f"loop{k}.exit"
        self.emit(f"br label %{head}")
        self.lines.append(f"{head}:")
        self.emit(f"%i{k} = phi i64 [ 0, %{self.block} ], [ %i{k}.next, %{body} ]")
        self.emit(f"%i{k}.cond = icmp slt i64 %i{k}, {n}")
        self.emit(f"br i1 %i{k}.cond, label %{body}, label %{done}")
        self.lines.append(f"{body}:")
        q = self.load(f"%i{k}")
        self.call(ONE_QUBIT_QIS[kind], f"%Qubit* {q}")
        self.emit(f"%i{k}.next = add i64 %i{k}, 1")
        self.emit(f"br label %{head}")
        self.lines.append(f"{done}:")
        self.block = done

    def items(self, items) -> None:
        for it in items:
            if isinstance(it, GateSpec):
                for g in expand(it):
                    self.gate(g)
            elif isinstance(it, Layer):
                if self.e.style.loop_form == "runtimeSizeLoop":
                    self.layer(it.kind)
                else:
                    for q in range(self.e.spec.n_qubits):
                        self.gate(GateSpec(it.kind, (q,)))
            elif isinstance(it, Repeat):
                for _ in range(it.count):
                    self.items(it.body)
            elif isinstance(it, Invoke):
                self.e.invoke(self, it)


class _Emitter:
    def __init__(self, spec: CircuitSpec, style: EmitterStyle):
        self.spec = spec
        self.style = style
        self.used: list[str] = []
        self.need_cnot_wrapper = False
        self.callables: dict[str, tuple] = {}
        self.n_arrays = 0

    def use(self, canon: str) -> None:
        if canon not in self.used:
            self.used.append(canon)

    def control_array(self, b: _Body, control: str) -> str:
        self.n_arrays += 1
        arr = "%__controlQubits__" if b.array == "" else f"%__controlQubits__{self.n_arrays}"
        self.use("array_create_1d")
        b.emit(f"{arr} = call %Array* {_callee('array_create_1d')}(i32 8, i64 1)")
        p = b.call("array_get_element_ptr_1d", f"%Array* {arr}, i64 0", "i8*")
        c = b.tmp()
        b.emit(f"{c} = bitcast i8* {p} to %Qubit**")
        b.emit(f"store %Qubit* {control}, %Qubit** {c}, align 8")
        return arr

    def controlled_x(self, b: _Body, control: str, target: str) -> None:
        arr = self.control_array(b, control)
        b.call("array_update_alias_count", f"%Array* {arr}, i32 1")
        b.call("qis__x__ctl", f"%Array* {arr}, %Qubit* {target}")
        b.call("array_update_alias_count", f"%Array* {arr}, i32 -1")
        b.call("array_update_reference_count", f"%Array* {arr}, i32 -1")

    def invoke(self, b: _Body, it: Invoke) -> None:
        base = f"{self.spec.name}__{it.name}"
        if it.name not in self.callables:
            inner = _Body(self, "%qs")
            inner.items(it.body)
            inner.release_shared()
            self.callables[it.name] = (base, inner)
        for name in ("callable_create", "callable_invoke", "capture_update_reference_count",
                     "callable_update_reference_count", "tuple_create", "tuple_update_reference_count"):
            self.use(name)
        c = b.tmp()
        b.emit(f"{c} = call %Callable* {_callee('callable_create')}({TABLE_TY}* @{base}__FunctionTable, "
               f"{MEM_TABLE_TY}* null, %Tuple* null)")
        t = b.tmp()
        b.emit(f"{t} = call %Tuple* {_callee('tuple_create')}(i64 8)")
        tc = b.tmp()
        b.emit(f"{tc} = bitcast %Tuple* {t} to {{ %Array* }}*")
        fp = b.tmp()
        b.emit(f"{fp} = getelementptr inbounds {{ %Array* }}, {{ %Array* }}* {tc}, i32 0, i32 0")
        b.emit(f"store %Array* {b.array}, %Array** {fp}, align 8")
        b.emit(f"call void {_callee('callable_invoke')}(%Callable* {c}, %Tuple* {t}, %Tuple* null)")
        b.emit(f"call void {_callee('capture_update_reference_count')}(%Callable* {c}, i32 -1)")
        b.emit(f"call void {_callee('callable_update_reference_count')}(%Callable* {c}, i32 -1)")
        b.emit(f"call void {_callee('tuple_update_reference_count')}(%Tuple* {t}, i32 -1)")

    def cnot_wrapper(self) -> str:
        b = _Body(self, "")
        self.controlled_x(b, "%control", "%target")
        body = "\n".join(b.lines)
        return (f"define internal void @{CNOT_WRAPPER}(%Qubit* %control, %Qubit* %target) {{\n"
                f"entry:\n{body}\n  ret void\n}}")

    def render(self) -> str:
        spec = self.spec
        main = _Body(self, "%qs")
        main.emit(f"%qs = call %Array* {_callee('qubit_allocate_array')}(i64 {spec.n_qubits})")
        self.use("qubit_allocate_array")
        main.call("array_update_alias_count", "%Array* %qs, i32 1")
        main.items(spec.gates)
        main.release_shared()
        main.call("array_update_alias_count", "%Array* %qs, i32 -1")
        main.call("qubit_release_array", "%Array* %qs")
        main.emit("ret void")

        sections = []
        types = ["%Qubit = type opaque", "%Array = type opaque"]
        if self.callables:
            types += ["%Callable = type opaque", "%Tuple = type opaque"]
        sections.append("\n".join(types))
        if self.callables:
            tables = []
            for base, _ in self.callables.values():
                slots = ", ".join([f"{WRAPPER_TY} @{base}__body__wrapper"] + [f"{WRAPPER_TY} null"] * 3)
                tables.append(f"@{base}__FunctionTable = internal constant {TABLE_TY} [{slots}]")
            sections.append("\n".join(tables))
        sections.append(f"define void @{spec.name}__main() #0 {{\nentry:\n" + "\n".join(main.lines) + "\n}")
        for base, inner in self.callables.values():
            sections.append(
                f"define internal void @{base}__body__wrapper(%Tuple* %capture-tuple, %Tuple* %arg-tuple, "
                f"%Tuple* %result-tuple) #1 {{\nentry:\n"
                f"  %0 = bitcast %Tuple* %arg-tuple to {{ %Array* }}*\n"
                f"  %1 = getelementptr inbounds {{ %Array* }}, {{ %Array* }}* %0, i32 0, i32 0\n"
                f"  %2 = load %Array*, %Array** %1, align 8\n"
                f"  call void @{base}__body(%Array* %2)\n  ret void\n}}")
            sections.append(f"define internal void @{base}__body(%Array* %qs) #1 {{\nentry:\n"
                            + "\n".join(inner.lines) + "\n  ret void\n}")
        if self.need_cnot_wrapper:
            sections.append(self.cnot_wrapper())
        sections.append("\n".join(DECLS[c] for c in self.used))
        attrs = ['attributes #0 = { "EntryPoint" }']
        if self.callables:
            attrs.append("attributes #1 = { alwaysinline }")
        sections.append("\n".join(attrs))
        return f"; {spec.name}: {spec.n_qubits} qubits\n" + "\n\n".join(sections) + "\n"


def emit_qir_text(spec: CircuitSpec, style: Optional[EmitterStyle] = None) -> str:
    style = style or EmitterStyle()
    spec.validate()
    style.validate(spec)
    return _Emitter(spec, style).render()


def emit_qir(spec: CircuitSpec, style: Optional[EmitterStyle] = None) -> QirModule:
    """Emit ``spec`` as a parsed module; one entry function over one register."""
    return parse_module(emit_qir_text(spec, style))


# ---------------------------------------------------------------------------
# builtins and random circuits

DEFAULT_MIX = (("1q", 0.40), ("CNOT", 0.45), ("SWAP", 0.10), ("CCX", 0.05))
SCALING_SIZES = (18, 100, 500, 2000, 6723)
SCALING_QUBITS = 8
SCALING_SEED = 20231


def random_circuit(n_gates: int, n_qubits: int = SCALING_QUBITS, seed: int = 0,
                   mix: Sequence[tuple[str, float]] = DEFAULT_MIX, name: Optional[str] = None) -> CircuitSpec:
    """Seeded random circuit with the given gate-kind mix."""
    if n_gates < 0:
        raise InvalidSpec("gate count must be non-negative")
    rng = random.Random(seed)
    kinds = [k for k, _ in mix]
    weights = [w for _, w in mix]
    gates = []
    for _ in range(n_gates):
        kind = rng.choices(kinds, weights)[0]
        if kind == "1q":
            kind = rng.choice(ONE_QUBIT)
        arity = GATE_ARITY[kind]
        if arity > n_qubits:
            kind, arity = rng.choice(ONE_QUBIT), 1
        gates.append(GateSpec(kind, tuple(rng.sample(range(n_qubits), arity))))
    return CircuitSpec(n_qubits, gates, name or f"random_{n_gates}_{seed}")


def scaling_circuit(n_gates: int, seed: Optional[int] = None) -> CircuitSpec:
    return random_circuit(n_gates, SCALING_QUBITS, SCALING_SEED + n_gates if seed is None else seed,
                          name=f"scaling_{n_gates}")


def grover_like() -> CircuitSpec:
    diffusion = (Layer("H"), Layer("X"), GateSpec("H", (2,)), GateSpec("CCX", (0, 1, 2)),
                 GateSpec("H", (2,)), Layer("X"), Layer("H"))
    oracle = Invoke("Oracle", (GateSpec("CNOT", (0, 2)), GateSpec("CNOT", (1, 2))))
    return CircuitSpec(3, [Layer("H"), oracle, Repeat(2, diffusion)], "grover_like")


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    spec: CircuitSpec
    style: EmitterStyle = EmitterStyle()

    def emit(self) -> QirModule:
        return emit_qir(self.spec, self.style)

    def emit_text(self) -> str:
        return emit_qir_text(self.spec, self.style)


def builtin_corpus(seed: Optional[int] = None) -> list[CorpusEntry]:
    entries = [
        CorpusEntry("toffoli_decomposition", CircuitSpec(3, [GateSpec("CCX", (0, 1, 2))], "toffoli_decomposition")),
        CorpusEntry("grover_like", grover_like(), EmitterStyle(loop_form="runtimeSizeLoop")),
        CorpusEntry("repeated_control", CircuitSpec(
            3, [GateSpec("CNOT", (0, 1)), GateSpec("CNOT", (0, 2)), GateSpec("CNOT", (0, 1))], "repeated_control")),
    ]
    entries += [CorpusEntry(f"scaling_{n}", scaling_circuit(n, seed)) for n in SCALING_SIZES]
    return entries


ALIASES = {"toffoli": "toffoli_decomposition", "grover": "grover_like"}


def builtin(name: str, seed: Optional[int] = None) -> CorpusEntry:
    name = ALIASES.get(name, name)
    m = re.fullmatch(r"scaling_(\d+)", name)
    if m:
        n = int(m.group(1))
        return CorpusEntry(name, scaling_circuit(n, seed))
    for e in builtin_corpus(seed):
        if e.name == name:
            return e
    known = ", ".join(e.name for e in builtin_corpus())
    raise UnknownCorpusName(f"no builtin circuit named {name!r} (known: {known}, scaling_<N>)")


# ---------------------------------------------------------------------------
# circuit files


def _item_to_json(it) -> dict:
    if isinstance(it, GateSpec):
        return {"kind": it.kind, "qubits": list(it.qubits)}
    if isinstance(it, Layer):
        return {"layer": it.kind}
    if isinstance(it, Repeat):
        return {"repeat": it.count, "body": [_item_to_json(x) for x in it.body]}
    if isinstance(it, Invoke):
        return {"invoke": it.name, "body": [_item_to_json(x) for x in it.body]}
    raise TypeError(f"cannot serialize {it!r}")


def spec_to_json(spec: CircuitSpec) -> dict:
    return {"name": spec.name, "nQubits": spec.n_qubits, "gates": [_item_to_json(g) for g in spec.gates]}


def _item_from_json(d, where: str):
    if not isinstance(d, dict):
        raise SchemaError(where, "expected an object")
    keys = set(d)
    if "kind" in d:
        if keys != {"kind", "qubits"}:
            raise SchemaError(where, f"gate needs exactly 'kind' and 'qubits', got {sorted(keys)}")
        if not isinstance(d["kind"], str) or not isinstance(d["qubits"], list) \
                or not all(isinstance(q, int) and not isinstance(q, bool) for q in d["qubits"]):
            raise SchemaError(where, "gate kind must be a string and qubits a list of integers")
        return GateSpec(d["kind"], tuple(d["qubits"]))
    if "layer" in d:
        if keys != {"layer"} or not isinstance(d["layer"], str):
            raise SchemaError(where, "layer needs a single gate-kind string")
        return Layer(d["layer"])
    for key, cls in (("repeat", Repeat), ("invoke", Invoke)):
        if key in d:
            if keys != {key, "body"} or not isinstance(d["body"], list):
                raise SchemaError(where, f"{key} needs '{key}' and a 'body' list")
            arg = d[key]
            if key == "repeat" and (not isinstance(arg, int) or isinstance(arg, bool)):
                raise SchemaError(where + ".repeat", "expected an integer")
            if key == "invoke" and not isinstance(arg, str):
                raise SchemaError(where + ".invoke", "expected a name")
            return cls(arg, tuple(_item_from_json(x, f"{where}.body[{k}]") for k, x in enumerate(d["body"])))
    raise SchemaError(where, "expected one of 'kind', 'layer', 'repeat' or 'invoke'")


def spec_from_json(doc, default_name: str = "circuit") -> CircuitSpec:
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    extra = set(doc) - {"name", "nQubits", "gates"}
    if extra:
        raise SchemaError(sorted(extra)[0], "unknown field")
    if "nQubits" not in doc:
        raise SchemaError("nQubits", "missing")
    n = doc["nQubits"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SchemaError("nQubits", "expected a positive integer")
    gates = doc.get("gates", [])
    if not isinstance(gates, list):
        raise SchemaError("gates", "expected a list")
    name = doc.get("name", default_name)
    if not isinstance(name, str):
        raise SchemaError("name", "expected a string")
    spec = CircuitSpec(n, [_item_from_json(g, f"gates[{k}]") for k, g in enumerate(gates)], name)
    try:
        spec.validate()
    except InvalidSpec as exc:
        field_name = str(exc).split(":", 1)[0] if ":" in str(exc) else "gates"
        raise SchemaError(field_name, str(exc)) from None
    return spec


def load_circuit_file(path: Union[str, os.PathLike]) -> CircuitSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"not valid JSON: {exc}") from None
    stem = re.sub(r"\W", "_", os.path.splitext(os.path.basename(os.fspath(path)))[0]) or "circuit"
    if stem[0].isdigit():
        stem = "c_" + stem
    return spec_from_json(doc, stem)


def save_circuit_file(spec: CircuitSpec, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_json(spec), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# nested slices


@dataclass
class SliceProgram:
    text: str
    n_qubits: int
    # slice name -> expected positions in the register
    expected: dict[str, list[int]]


def _random_range(rng: random.Random, length: int) -> tuple[int, int, int]:
    step = rng.choice([s for s in range(-3, 4) if s])
    start = rng.randrange(length)
    if step > 0:
        end = rng.randrange(start, length)
    else:
        end = rng.randrange(0, start + 1)
    return start, step, end


def _indices(start: int, step: int, end: int) -> list[int]:
    out, k = [], start
    while (step > 0 and k <= end) or (step < 0 and k >= end):
        out.append(k)
        k += step
    return out


def random_slice_program(seed: int, max_depth: int = 3, n_slices: int = 4) -> SliceProgram:
    """A register, a few chains of slices over it, and an H on every slice element."""
    rng = random.Random(seed)
    n = rng.randint(4, 12)
    lines = [f"  %qs = call %Array* @__quantum__rt__qubit_allocate_array(i64 {n})"]
    expected: dict[str, list[int]] = {}
    tmp = 0
    for s in range(n_slices):
        parent, pos = "%qs", list(range(n))
        for d in range(rng.randint(1, max_depth)):
            r = _random_range(rng, len(pos))
            name = f"%s{s}.{d}"
            lines.append(f"  {name} = call %Array* @__quantum__rt__array_slice_1d(%Array* {parent}, "
                         f"%Range {{ i64 {r[0]}, i64 {r[1]}, i64 {r[2]} }}, i1 true)")
            pos = [pos[k] for k in _indices(*r)]
            expected[name[1:]] = pos
            parent = name
        for k in rng.sample(range(len(pos)), min(len(pos), 3)):
            lines.append(f"  %{tmp} = call i8* @__quantum__rt__array_get_element_ptr_1d(%Array* {parent}, i64 {k})")
            lines.append(f"  %{tmp + 1} = bitcast i8* %{tmp} to %Qubit**")
            lines.append(f"  %{tmp + 2} = load %Qubit*, %Qubit** %{tmp + 1}, align 8")
            lines.append(f"  call void @__quantum__qis__h__body(%Qubit* %{tmp + 2})")
            tmp += 3
    lines.append("  call void @__quantum__rt__qubit_release_array(%Array* %qs)")
    lines.append("  ret void")
    decls = [DECLS[k] for k in ("qubit_allocate_array", "array_slice_1d", "array_get_element_ptr_1d",
                                "qis__h__body", "qubit_release_array")]
    text = ("%Qubit = type opaque\n%Array = type opaque\n%Range = type { i64, i64, i64 }\n\n"
            "define void @slices() #0 {\nentry:\n" + "\n".join(lines) + "\n}\n\n"
            + "\n".join(decls) + '\n\nattributes #0 = { "EntryPoint" }\n')
    return SliceProgram(text, n, expected)
