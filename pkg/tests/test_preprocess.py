import pytest

from qdfo.corpus import builtin
from qdfo.ir import parse_module, print_module, validate
from qdfo.ir.names import CALLABLE_INVOKE, GET_SIZE, is_call_to
from qdfo.oracle import interpret, trace_equal
from qdfo.preprocess import DEFAULT_CTL_INLINE_PATTERNS, qir_ctl_inline, qir_inline, qir_loop_unroll_prep

TABLE_TY = "[4 x void (%Tuple*, %Tuple*, %Tuple*)*]"
FN_TY = "void (%Tuple*, %Tuple*, %Tuple*)*"
MEM_TY = "[2 x void (%Tuple*, i32)*]"

CALLABLE = f"""\
%Qubit = type opaque
%Array = type opaque
%Callable = type opaque
%Tuple = type opaque

@Op__FunctionTable = internal constant {TABLE_TY} [{FN_TY} @Op__body__wrapper, {FN_TY} null, {FN_TY} null, {FN_TY} null]

define void @main() #0 {{
entry:
  %cap = call %Tuple* @__quantum__rt__tuple_create(i64 8)
  %c = call %Callable* @__quantum__rt__callable_create({TABLE_TY}* @Op__FunctionTable, {MEM_TY}* null, %Tuple* CAPTURE)
  EXTRA
  call void @__quantum__rt__callable_invoke(%Callable* %c, %Tuple* null, %Tuple* null)
  call void @__quantum__rt__callable_update_reference_count(%Callable* %c, i32 -1)
  ret void
}}

define internal void @Op__body__wrapper(%Tuple* %capture, %Tuple* %args, %Tuple* %result) {{
entry:
  call void @Op__body()
  ret void
}}

define internal void @Op__body() {{
entry:
  %q = call %Qubit* @__quantum__rt__qubit_allocate()
  call void @__quantum__qis__h__body(%Qubit* %q)
  call void @__quantum__rt__qubit_release(%Qubit* %q)
  ret void
}}

declare %Tuple* @__quantum__rt__tuple_create(i64)
declare %Callable* @__quantum__rt__callable_create({TABLE_TY}*, {MEM_TY}*, %Tuple*)
declare void @__quantum__rt__callable_invoke(%Callable*, %Tuple*, %Tuple*)
declare void @__quantum__rt__callable_update_reference_count(%Callable*, i32)
declare void @__quantum__rt__callable_make_controlled(%Callable*)
declare void @sink(%Callable*)
declare %Qubit* @__quantum__rt__qubit_allocate()
declare void @__quantum__rt__qubit_release(%Qubit*)
declare void @__quantum__qis__h__body(%Qubit*)

attributes #0 = {{ "EntryPoint" }}
"""


def callable_module(capture="null", extra=""):
    return parse_module(CALLABLE.replace("CAPTURE", capture).replace("EXTRA", extra or "%unused = add i64 0, 0"))


def test_inline_rewrites_local_invoke():
    m = callable_module()
    before = interpret(m)
    diags = []
    assert qir_inline(m, diags) == 1
    assert not diags
    main = m.get_function("main")
    assert not any(is_call_to(i, CALLABLE_INVOKE) for i in main.instructions())
    direct = [i for i in main.instructions() if i.opcode == "call" and i.callee.name == "Op__body__wrapper"]
    assert len(direct) == 1
    assert not validate(m)
    assert trace_equal(before, interpret(m))


@pytest.mark.parametrize("capture, extra, code", [
    ("%cap", "", "CaptureTuple"),
    ("null", "call void @__quantum__rt__callable_make_controlled(%Callable* %c)", "SpecializedCallable"),
    ("null", "call void @sink(%Callable* %c)", "CallableEscapes"),
])
def test_inline_skips_with_reason(capture, extra, code):
    m = callable_module(capture, extra)
    text = print_module(m)
    diags = []
    assert qir_inline(m, diags) == 0
    assert code in {d.code for d in diags}
    assert print_module(m) == text


def test_grover_counts():
    m = builtin("grover").emit()
    sites = sum(1 for f in m.defined_functions() for i in f.instructions() if is_call_to(i, GET_SIZE))
    assert qir_inline(m) == 1
    assert qir_loop_unroll_prep(m) == sites == 9
    assert qir_loop_unroll_prep(m) == 0


def test_unroll_prep_needs_a_known_length():
    text = ("%Array = type opaque\n\ndefine i64 @f(%Array* %a) {\nentry:\n"
            "  %n = call i64 @__quantum__rt__array_get_size_1d(%Array* %a)\n  ret i64 %n\n}\n"
            "declare i64 @__quantum__rt__array_get_size_1d(%Array*)\n")
    m = parse_module(text)
    assert qir_loop_unroll_prep(m) == 0


def test_unroll_prep_through_slice():
    text = ("%Array = type opaque\n%Range = type { i64, i64, i64 }\n\ndefine i64 @f() {\nentry:\n"
            "  %qs = call %Array* @__quantum__rt__qubit_allocate_array(i64 6)\n"
            "  %s = call %Array* @__quantum__rt__array_slice_1d(%Array* %qs, %Range { i64 5, i64 -2, i64 0 }, i1 true)\n"
            "  %n = call i64 @__quantum__rt__array_get_size_1d(%Array* %s)\n  ret i64 %n\n}\n"
            "declare %Array* @__quantum__rt__qubit_allocate_array(i64)\n"
            "declare %Array* @__quantum__rt__array_slice_1d(%Array*, %Range, i1)\n"
            "declare i64 @__quantum__rt__array_get_size_1d(%Array*)\n")
    m = parse_module(text)
    assert qir_loop_unroll_prep(m) == 1
    ret = m.defined_functions()[0].entry.instructions[-1]
    assert ret.operands[0].value == 3


def test_ctl_inline_tags_the_cnot_wrapper():
    m = builtin("toffoli").emit()
    assert qir_ctl_inline(m) == 1
    wrapper = [f for f in m.defined_functions() if f.name.endswith("CNOT__body")][0]
    assert "alwaysinline" in wrapper.attrs
    assert qir_ctl_inline(m) == 0


def test_ctl_inline_patterns():
    m = callable_module()
    assert qir_ctl_inline(m, ["op__body"]) == 1
    assert "alwaysinline" in m.get_function("Op__body").attrs
    assert qir_ctl_inline(m, []) == 0
    assert "*__ctl" in DEFAULT_CTL_INLINE_PATTERNS


def test_ctl_inline_structural_match_without_name_hit(cnot_text):
    m = parse_module(cnot_text)
    assert qir_ctl_inline(m, []) == 1
    assert "alwaysinline" in m.get_function("Intrinsic__CNOT__body").attrs


def test_inline_leaves_invokes_of_parameters():
    text = ("%Callable = type opaque\n%Tuple = type opaque\n\ndefine void @f(%Callable* %c) {\nentry:\n"
            "  call void @__quantum__rt__callable_invoke(%Callable* %c, %Tuple* null, %Tuple* null)\n"
            "  ret void\n}\ndeclare void @__quantum__rt__callable_invoke(%Callable*, %Tuple*, %Tuple*)\n")
    diags = []
    assert qir_inline(parse_module(text), diags) == 0
    assert [d.code for d in diags] == ["CallableNotLocal"]
