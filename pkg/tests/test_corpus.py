import cmath
import json
from collections import Counter

import pytest

from qdfo.corpus import (
    CircuitSpec,
    EmitterStyle,
    GateSpec,
    Invoke,
    Layer,
    Repeat,
    builtin,
    builtin_corpus,
    emit_qir,
    emit_qir_text,
    expected_counts,
    load_circuit_file,
    random_circuit,
    save_circuit_file,
    spec_from_json,
    toffoli_decomposition,
)
from qdfo.errors import InvalidSpec, SchemaError, UnknownCorpusName
from qdfo.ir import validate
from qdfo.oracle import count_idioms, interpret


def apply(state, g):
    """Apply one primitive gate to a dict basis-index -> amplitude."""
    out = {}
    for basis, amp in state.items():
        bit = [(basis >> q) & 1 for q in range(3)]
        if g.kind == "CNOT":
            a, b = g.qubits
            nb = basis ^ (1 << b) if bit[a] else basis
            out[nb] = out.get(nb, 0) + amp
        elif g.kind in ("T", "Tdg"):
            (q,) = g.qubits
            phase = cmath.exp((1j if g.kind == "T" else -1j) * cmath.pi / 4) if bit[q] else 1
            out[basis] = out.get(basis, 0) + amp * phase
        elif g.kind == "H":
            (q,) = g.qubits
            r = 2 ** -0.5
            out[basis & ~(1 << q)] = out.get(basis & ~(1 << q), 0) + amp * r
            sign = -1 if bit[q] else 1
            out[basis | (1 << q)] = out.get(basis | (1 << q), 0) + amp * r * sign
    return out


def test_toffoli_decomposition_is_a_toffoli():
    gates = toffoli_decomposition(0, 1, 2)
    assert len(gates) == 15
    assert Counter(g.kind for g in gates) == {"CNOT": 6, "T": 4, "Tdg": 3, "H": 2}
    for basis in range(8):
        state = {basis: 1}
        for g in gates:
            state = apply(state, g)
        want = basis ^ 4 if basis & 3 == 3 else basis
        assert abs(state.get(want, 0) - 1) < 1e-9
        assert sum(abs(a) ** 2 for k, a in state.items() if k != want) < 1e-9


def test_gate_and_primitive_counts():
    spec = CircuitSpec(3, [GateSpec("SWAP", (0, 1)), Layer("H"), Repeat(2, [GateSpec("CCX", (0, 1, 2))])])
    assert spec.gate_count == 1 + 3 + 2
    assert spec.primitive_count == 3 + 3 + 30


@pytest.mark.parametrize("seed", range(5))
def test_expected_counts_match_emitted(seed):
    spec = random_circuit(40, 5, seed)
    m = emit_qir(spec)
    assert not validate(m)
    c = count_idioms(m)
    assert {"loadOps": c.load_ops, "createOps": c.create_ops} == expected_counts(spec)


def test_trace_follows_the_circuit():
    spec = CircuitSpec(2, [GateSpec("H", (0,)), GateSpec("CNOT", (0, 1)), GateSpec("Tdg", (1,))])
    t = interpret(emit_qir(spec))
    assert [e.gate for e in t.events] == ["qis__h__body", "qis__x__ctl", "qis__t__adj"]
    assert [len(e.controls) for e in t.events] == [0, 1, 0]


def test_style_options():
    spec = CircuitSpec(2, [GateSpec("CNOT", (0, 1)), GateSpec("CNOT", (0, 1))])
    plain = count_idioms(emit_qir(spec))
    lean = count_idioms(emit_qir(spec, EmitterStyle(wrap_controlled_gates=False)))
    assert lean.functions < plain.functions
    with pytest.raises(InvalidSpec):
        emit_qir_text(spec, EmitterStyle(loop_form="whileLoop"))
    with pytest.raises(InvalidSpec):
        emit_qir_text(spec, EmitterStyle(loop_form="runtimeSizeLoop"))


@pytest.mark.parametrize("spec, fragment", [
    (CircuitSpec(0, []), "nQubits"),
    (CircuitSpec(2, [GateSpec("CZ", (0, 1))]), "unknown gate kind"),
    (CircuitSpec(2, [GateSpec("CNOT", (0,))]), "takes 2 qubits"),
    (CircuitSpec(2, [GateSpec("H", (2,))]), "outside"),
    (CircuitSpec(2, [GateSpec("CNOT", (1, 1))]), "repeated qubit"),
    (CircuitSpec(2, [Invoke("F", [Layer("H")])]), "not supported inside callables"),
    (CircuitSpec(2, [Invoke("F", [Invoke("G", [])])]), "nested"),
    (CircuitSpec(2, [Repeat(-1, [])]), "non-negative"),
    (CircuitSpec(2, [], "bad name"), "identifier"),
])
def test_invalid_specs(spec, fragment):
    with pytest.raises(InvalidSpec, match=fragment):
        spec.validate()


def test_json_round_trip(tmp_path):
    spec = builtin("grover").spec
    path = tmp_path / "grover.json"
    save_circuit_file(spec, path)
    assert load_circuit_file(path) == spec
    doc = json.loads(path.read_text())
    assert list(doc) == ["name", "nQubits", "gates"]


def test_file_name_becomes_default_name(tmp_path):
    path = tmp_path / "3-qubit demo.json"
    path.write_text('{"nQubits": 1, "gates": [{"kind": "H", "qubits": [0]}]}')
    assert load_circuit_file(path).name == "c_3_qubit_demo"


@pytest.mark.parametrize("doc, field", [
    ([], "$"),
    ({"gates": []}, "nQubits"),
    ({"nQubits": True}, "nQubits"),
    ({"nQubits": 2, "extra": 1}, "extra"),
    ({"nQubits": 2, "gates": {}}, "gates"),
    ({"nQubits": 2, "gates": [{"kind": "H"}]}, "gates[0]"),
    ({"nQubits": 2, "gates": [{"repeat": 2, "body": [5]}]}, "gates[0].body[0]"),
    ({"nQubits": 2, "gates": [{"repeat": "x", "body": []}]}, "gates[0].repeat"),
    ({"nQubits": 2, "gates": [{"kind": "H", "qubits": [7]}]}, "gates[0]"),
])
def test_schema_errors(doc, field):
    with pytest.raises(SchemaError) as info:
        spec_from_json(doc)
    assert info.value.field == field


def test_bad_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{nope")
    with pytest.raises(SchemaError) as info:
        load_circuit_file(path)
    assert info.value.field == "$"


def test_builtins():
    names = [e.name for e in builtin_corpus()]
    assert names[:3] == ["toffoli_decomposition", "grover_like", "repeated_control"]
    assert builtin("toffoli").name == "toffoli_decomposition"
    assert builtin("scaling_37").spec.gate_count == 37
    with pytest.raises(UnknownCorpusName):
        builtin("nonesuch")


def test_seeds_are_deterministic():
    assert random_circuit(50, seed=3) == random_circuit(50, seed=3)
    assert random_circuit(50, seed=3).gates != random_circuit(50, seed=4).gates
    assert builtin("scaling_100").emit_text() == builtin("scaling_100").emit_text()
    assert builtin("scaling_100", seed=1).spec != builtin("scaling_100").spec


def test_grover_shape():
    spec = builtin("grover").spec
    assert spec.n_qubits == 3 and spec.has_layers
    layers = [it for it in spec.items() if isinstance(it, Layer)]
    assert len(layers) == 9
    text = builtin("grover").emit_text()
    assert text.count("array_get_size_1d(%Array*") - 1 == 9
    assert text.count("call void @__quantum__rt__callable_invoke") == 1
