import sys

import pytest

from support import back_edges

from qdfo.cleanup import (
    CleanupConfig,
    dce_pure,
    fold_binop,
    fold_icmp,
    forward_tuple_stores,
    inline_always,
    mark_tail_calls,
    remove_unreferenced_symbols,
    run_cleanup,
    run_external,
    wrap_int,
)
from qdfo.corpus import builtin
from qdfo.errors import ExternalOptFailed
from qdfo.ir import parse_module, print_module, validate
from qdfo.ir.names import callee_canonical
from qdfo.oracle import interpret, trace_equal

DECLS = """
declare %Array* @__quantum__rt__qubit_allocate_array(i64)
declare void @__quantum__rt__qubit_release_array(%Array*)
declare i8* @__quantum__rt__array_get_element_ptr_1d(%Array*, i64)
declare void @__quantum__qis__h__body(%Qubit*)
"""

LOOP = """\
%Qubit = type opaque
%Array = type opaque

define void @main() #0 {
entry:
  %qs = call %Array* @__quantum__rt__qubit_allocate_array(i64 TRIP)
  br label %header
header:
  %i = phi i64 [ 0, %entry ], [ %next, %body ]
  %cond = icmp slt i64 %i, TRIP
  br i1 %cond, label %body, label %exit
body:
  %p = call i8* @__quantum__rt__array_get_element_ptr_1d(%Array* %qs, i64 %i)
  %c = bitcast i8* %p to %Qubit**
  %q = load %Qubit*, %Qubit** %c, align 8
  call void @__quantum__qis__h__body(%Qubit* %q)
  %next = add i64 %i, 1
  br label %header
exit:
  call void @__quantum__rt__qubit_release_array(%Array* %qs)
  ret void
}
""" + DECLS + '\nattributes #0 = { "EntryPoint" }\n'


def loop(trip: int):
    return parse_module(LOOP.replace("TRIP", str(trip)))


@pytest.mark.parametrize("value, width, out", [
    (255, 8, -1), (128, 8, -128), (127, 8, 127), (3, 1, 1), (2 ** 64, 64, 0), (-1, 32, -1),
])
def test_wrap_int(value, width, out):
    assert wrap_int(value, width) == out


def test_fold_helpers():
    assert fold_binop("add", 2 ** 63 - 1, 1, 64) == -(2 ** 63)
    assert fold_binop("mul", 6, 7, 64) == 42
    assert fold_binop("sub", 0, 1, 8) == -1
    assert fold_icmp("slt", -1, 0, 64)
    assert not fold_icmp("ult", -1, 0, 64)
    assert fold_icmp("uge", -1, 5, 8)
    assert fold_icmp("ne", 1, 2, 64)


def test_constant_loop_is_unrolled():
    m = loop(3)
    before = interpret(m)
    s = run_cleanup(m)
    f = m.defined_functions()[0]
    assert s.unrolled == 1
    assert back_edges(f) == []
    assert len(f.blocks) == 1
    gates = [i for i in f.instructions() if callee_canonical(i) == "qis__h__body"]
    assert len(gates) == 3
    assert trace_equal(before, interpret(m))
    assert not validate(m)


def test_unroll_bound_leaves_loop_with_diagnostic():
    m = loop(5)
    s = run_cleanup(m, CleanupConfig(max_unroll_trip_count=4))
    assert s.unrolled == 0
    assert back_edges(m.defined_functions()[0])
    assert "LoopNotUnrolled" in {d.code for d in s.diagnostics}


def test_zero_trip_loop_disappears():
    m = loop(0)
    run_cleanup(m)
    f = m.defined_functions()[0]
    assert not any(callee_canonical(i) == "qis__h__body" for i in f.instructions())
    assert not back_edges(f)


def test_inline_always_expands_wrappers():
    m = builtin("grover").emit()
    from qdfo.preprocess import qir_ctl_inline, qir_inline

    from qdfo.core import qir_dce

    qir_inline(m)
    qir_ctl_inline(m)
    assert inline_always(m) > 0
    main = m.get_function("grover_like__main")
    qir_dce(main)
    assert remove_unreferenced_symbols(m) > 0
    assert [f.name for f in m.defined_functions()] == ["grover_like__main"]
    assert not m.globals


def test_dce_pure_keeps_calls_and_drops_dead_arithmetic():
    text = ("%Qubit = type opaque\n%Array = type opaque\n\ndefine void @f() {\nentry:\n"
            "  %qs = call %Array* @__quantum__rt__qubit_allocate_array(i64 2)\n"
            "  %p = call i8* @__quantum__rt__array_get_element_ptr_1d(%Array* %qs, i64 1)\n"
            "  %c = bitcast i8* %p to %Qubit**\n"
            "  %q = load %Qubit*, %Qubit** %c, align 8\n"
            "  %a = add i64 1, 2\n"
            "  ret void\n}\n" + DECLS)
    m = parse_module(text)
    assert dce_pure(m) == 3
    assert [i.opcode for i in m.defined_functions()[0].instructions()] == ["call", "call", "ret"]


def test_forward_tuple_stores():
    text = ("%Qubit = type opaque\n%Array = type opaque\n%Tuple = type opaque\n\n"
            "define void @f(%Array* %a) {\nentry:\n"
            "  %t = call %Tuple* @__quantum__rt__tuple_create(i64 8)\n"
            "  %c = bitcast %Tuple* %t to { %Array* }*\n"
            "  %g = getelementptr inbounds { %Array* }, { %Array* }* %c, i32 0, i32 0\n"
            "  store %Array* %a, %Array** %g, align 8\n"
            "  %g2 = getelementptr inbounds { %Array* }, { %Array* }* %c, i32 0, i32 0\n"
            "  %b = load %Array*, %Array** %g2, align 8\n"
            "  call void @use(%Array* %b)\n"
            "  ret void\n}\n"
            "declare %Tuple* @__quantum__rt__tuple_create(i64)\ndeclare void @use(%Array*)\n")
    m = parse_module(text)
    f = m.defined_functions()[0]
    assert forward_tuple_stores(f) == 1
    call = [i for i in f.instructions() if callee_canonical(i) == "use"][0]
    assert call.operands[0] is f.params[0]


def test_tail_marking_is_idempotent():
    m = builtin("toffoli").emit()
    run_cleanup(m)
    assert mark_tail_calls(m) == 0
    assert " tail call " in print_module(m) or "tail call" in print_module(m)


def test_cleanup_is_a_fixpoint():
    m = builtin("toffoli").emit()
    run_cleanup(m)
    text = print_module(m)
    s = run_cleanup(m)
    assert s.total == 0 and s.rounds == 0
    assert print_module(m) == text


@pytest.mark.parametrize("field", ["max_unroll_trip_count", "max_inline_depth", "max_rounds"])
def test_config_rejects_nonpositive_bounds(field):
    with pytest.raises(ValueError):
        CleanupConfig(**{field: 0})


def test_summary_dict_keys():
    s = run_cleanup(loop(2))
    assert set(s.as_dict()) == {"inlined", "folded", "unrolled", "dceRemoved", "symbolsRemoved",
                                "tailMarked", "forwarded", "rounds"}


def test_external_optimizer_failure_is_reported():
    with pytest.raises(ExternalOptFailed) as exc:
        run_external(loop(2), f"{sys.executable} -c 'import sys; sys.exit(3)'")
    assert exc.value.exit_code == 3


def test_external_optimizer_replaces_module(tmp_path):
    script = tmp_path / "copy.py"
    script.write_text("import shutil, sys\nshutil.copy(sys.argv[1], sys.argv[3])\n")
    m = loop(2)
    text = print_module(m)
    s = run_cleanup(m, CleanupConfig(external_opt_command=f"{sys.executable} {script}"))
    assert s.external
    assert print_module(m) == text
