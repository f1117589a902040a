import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from support import oracle_dead_set, random_dce_function

from qdfo.cleanup import dce_pure

from qdfo.core import (
    collect_create_ops,
    collect_load_ops,
    compute_slices,
    qdfo_create,
    qdfo_create_ex,
    qdfo_load,
    qir_dce,
)
from qdfo.core.creates import UnsafeEscape, mmo_plan
from qdfo.core.dce import DceKeywordList, qir_dce_removal_set
from qdfo.corpus import builtin
from qdfo.dataflow import DefUse
from qdfo.ir import parse_module, validate
from qdfo.ir.names import callee_canonical, is_gate
from qdfo.oracle import count_idioms, interpret, trace_equal
from qdfo.workflow import PASS_NAMES, QDFO_CREATE, run_passes

HEAD = "%Qubit = type opaque\n%Array = type opaque\n%Range = type { i64, i64, i64 }\n\n"
DECLS = """
declare %Array* @qubit_allocate_array(i64)
declare void @qubit_release_array(%Array*)
declare i8* @array_get_element_ptr_1d(%Array*, i64)
declare %Array* @array_slice_1d(%Array*, %Range, i1)
declare %Array* @array_create_1d(i32, i64)
declare void @array_update_alias_count(%Array*, i32)
declare void @array_update_reference_count(%Array*, i32)
declare void @mutate(%Array*)
declare void @qis__h__body(%Qubit*)
declare void @qis__x__ctl(%Array*, %Qubit*)
"""


class Body:
    def __init__(self):
        self.lines = []
        self.k = 0

    def __call__(self, line):
        self.lines.append("  " + line)
        return self

    def load(self, array, index, gate=True):
        k = self.k
        self.k += 1
        self(f"%p{k} = call i8* @array_get_element_ptr_1d(%Array* {array}, i64 {index})")
        self(f"%c{k} = bitcast i8* %p{k} to %Qubit**")
        self(f"%q{k} = load %Qubit*, %Qubit** %c{k}, align 8")
        if gate:
            self(f"call void @qis__h__body(%Qubit* %q{k})")
        return f"%q{k}"

    def label(self, name):
        self.lines.append(f"{name}:")
        return self

    def module(self, params=""):
        return parse_module(HEAD + f"define void @f({params}) #0 {{\nentry:\n" + "\n".join(self.lines)
                            + "\n}\n" + DECLS + '\nattributes #0 = { "EntryPoint" }\n')


def alloc(n=3):
    return Body()(f"%qs = call %Array* @qubit_allocate_array(i64 {n})")


def finish(b):
    b("call void @qubit_release_array(%Array* %qs)")("ret void")
    return b.module()


def run_load(m, **kw):
    f = m.defined_functions()[0]
    slices = compute_slices(f)
    diags = []
    n = qdfo_load(f, collect_load_ops(f, slices, diags), slices, diagnostics=diags, **kw)
    return n, diags


def test_duplicate_loads_merge():
    b = alloc()
    b.load("%qs", 0)
    b.load("%qs", 1)
    b.load("%qs", 0)
    m = finish(b)
    before = interpret(m)
    assert run_load(m)[0] == 1
    assert trace_equal(before, interpret(m))
    assert not validate(m)


def test_read_only_calls_do_not_block():
    b = alloc()
    b.load("%qs", 0)
    b("call void @array_update_alias_count(%Array* %qs, i32 1)")
    b.load("%qs", 0)
    assert run_load(finish(b))[0] == 1


def test_mutating_call_is_a_barrier():
    b = alloc()
    b.load("%qs", 0)
    b("call void @mutate(%Array* %qs)")
    b.load("%qs", 0)
    assert run_load(finish(b))[0] == 0


def test_barrier_outside_the_pair_does_not_block():
    b = alloc()
    b.load("%qs", 0)
    b.load("%qs", 0)
    b("call void @mutate(%Array* %qs)")
    assert run_load(finish(b))[0] == 1


def test_load_through_slice_merges_with_direct_load():
    b = alloc(5)
    b("%s = call %Array* @array_slice_1d(%Array* %qs, %Range { i64 3, i64 -1, i64 0 }, i1 true)")
    b.load("%qs", 2)
    b.load("%s", 1)
    m = finish(b)
    before = interpret(m)
    assert run_load(m)[0] == 1
    assert trace_equal(before, interpret(m))


def test_cross_block_merge_needs_dominance():
    b = alloc()
    b.load("%qs", 0)
    b("br i1 true, label %l, label %r").label("l")
    b.load("%qs", 0)
    b("br label %j").label("r")
    b.load("%qs", 0)
    b("br label %j").label("j")
    b("ret void")
    assert run_load(b.module())[0] == 2

    b = alloc()
    b("br i1 true, label %l, label %r").label("l")
    b.load("%qs", 0)
    b("br label %j").label("r")
    b.load("%qs", 0)
    b("br label %j").label("j")
    b("ret void")
    assert run_load(b.module())[0] == 0


def test_any_barrier_stops_cross_block_merges():
    b = alloc()
    b.load("%qs", 0)
    b("br label %next").label("next")
    b.load("%qs", 0)
    assert run_load(finish(b))[0] == 0


def test_qubit_table_limit():
    b = alloc(10)
    b.load("%qs", 0)
    b.load("%qs", 0)
    n, diags = run_load(finish(b), max_qubits=4)
    assert n == 0
    assert "QubitTableLimit" in {d.code for d in diags}


def test_dynamic_index_is_not_collected():
    b = alloc()
    b("%i = add i64 0, 1")
    b.load("%qs", "%i")
    m = finish(b)
    f = m.defined_functions()[0]
    assert collect_load_ops(f, compute_slices(f)) == []


def test_load_descriptor_fields():
    b = alloc(5)
    b("%s = call %Array* @array_slice_1d(%Array* %qs, %Range { i64 4, i64 -1, i64 0 }, i1 true)")
    b.load("%s", 0)
    m = finish(b)
    f = m.defined_functions()[0]
    (d,) = collect_load_ops(f, compute_slices(f))
    assert (d.index, d.resolved_qubit) == (0, 4)
    assert d.allocation is f.entry.instructions[0]
    assert d.load_inst.operands[0] is d.bitcast and d.bitcast.operands[0] is d.gep_call


# -- control arrays --------------------------------------------------------


def pre_create(name):
    m = builtin(name).emit()
    run_passes(m, [p for p in PASS_NAMES if p != QDFO_CREATE])
    return m


def test_repeated_control_merge():
    m = pre_create("repeated_control")
    f = m.entry_points()[0]
    groups = collect_create_ops(f)
    assert len(groups) == 3 and all(g.length == 1 for g in groups)
    before = interpret(m)
    res = qdfo_create_ex(f, groups)
    assert (res.merges, res.mmo_removed) == (2, 6)
    assert count_idioms(m).create_ops == 1
    assert trace_equal(before, interpret(m))


def test_create_without_mmo_is_unsafe():
    m = pre_create("repeated_control")
    f = m.entry_points()[0]
    assert qdfo_create(f, collect_create_ops(f), run_mmo=False) == 2
    assert "UseAfterRelease" in {d.code for d in interpret(m).diagnostics}


def ctl(b, name, qubit):
    b(f"%{name} = call %Array* @array_create_1d(i32 8, i64 1)")
    b(f"%{name}.p = call i8* @array_get_element_ptr_1d(%Array* %{name}, i64 0)")
    b(f"%{name}.c = bitcast i8* %{name}.p to %Qubit**")
    b(f"store %Qubit* {qubit}, %Qubit** %{name}.c, align 8")


def test_partial_create_is_not_collected():
    b = alloc()
    q = b.load("%qs", 0, gate=False)
    b("%a = call %Array* @array_create_1d(i32 8, i64 2)")
    b("%a.p = call i8* @array_get_element_ptr_1d(%Array* %a, i64 0)")
    b("%a.c = bitcast i8* %a.p to %Qubit**")
    b(f"store %Qubit* {q}, %Qubit** %a.c, align 8")
    m = finish(b)
    diags = []
    assert collect_create_ops(m.defined_functions()[0], diags) == []
    assert [d.code for d in diags] == ["PartialCreate"]


def test_duplicate_stored_qubit_is_diagnosed():
    b = alloc()
    q = b.load("%qs", 0, gate=False)
    t = b.load("%qs", 1, gate=False)
    for name in ("a", "b"):
        b(f"%{name} = call %Array* @array_create_1d(i32 8, i64 2)")
        for k in range(2):
            b(f"%{name}.p{k} = call i8* @array_get_element_ptr_1d(%Array* %{name}, i64 {k})")
            b(f"%{name}.c{k} = bitcast i8* %{name}.p{k} to %Qubit**")
            b(f"store %Qubit* {q}, %Qubit** %{name}.c{k}, align 8")
        b(f"call void @qis__x__ctl(%Array* %{name}, %Qubit* {t})")
    m = finish(b)
    f = m.defined_functions()[0]
    groups = collect_create_ops(f)
    assert all(g.has_duplicates for g in groups)
    diags = []
    assert qdfo_create(f, groups, diagnostics=diags) == 0
    assert {d.code for d in diags} == {"DuplicateStoredQubit"}


def test_unbalanced_counts_block_the_merge():
    b = alloc()
    q = b.load("%qs", 0, gate=False)
    t = b.load("%qs", 1, gate=False)
    ctl(b, "a", q)
    b(f"call void @qis__x__ctl(%Array* %a, %Qubit* {t})")
    b("call void @array_update_alias_count(%Array* %a, i32 1)")
    ctl(b, "b", q)
    b(f"call void @qis__x__ctl(%Array* %b, %Qubit* {t})")
    m = finish(b)
    f = m.defined_functions()[0]
    diags = []
    assert qdfo_create(f, collect_create_ops(f), diagnostics=diags) == 0
    assert "UnsafeEscape" in {d.code for d in diags}


def test_mmo_plan_selects_in_between_calls():
    b = alloc()
    q = b.load("%qs", 0, gate=False)
    t = b.load("%qs", 1, gate=False)
    ctl(b, "a", q)
    b("call void @array_update_alias_count(%Array* %a, i32 1)")
    b(f"call void @qis__x__ctl(%Array* %a, %Qubit* {t})")
    b("call void @array_update_alias_count(%Array* %a, i32 -1)")
    b("call void @array_update_reference_count(%Array* %a, i32 -1)")
    b("call void @array_update_alias_count(%Array* %a, i32 1)")
    b(f"call void @qis__x__ctl(%Array* %a, %Qubit* {t})")
    b("call void @array_update_alias_count(%Array* %a, i32 -1)")
    b("call void @array_update_reference_count(%Array* %a, i32 -1)")
    m = finish(b)
    f = m.defined_functions()[0]
    (g,) = collect_create_ops(f)
    own = {s[0] for s in g.stores}
    users = [u for u in DefUse(f).users(g.create_call) if u not in own]
    plan = mmo_plan(g.create_call, users, merged=1)
    assert len(plan) == 3
    assert all(not is_gate(callee_canonical(i)) for i in plan)
    with pytest.raises(UnsafeEscape):
        mmo_plan(g.create_call, users, merged=2)


def test_mmo_plan_rejects_foreign_use():
    b = alloc()
    q = b.load("%qs", 0, gate=False)
    ctl(b, "a", q)
    b("call void @mutate(%Array* %a)")
    m = finish(b)
    f = m.defined_functions()[0]
    (g,) = collect_create_ops(f)
    own = {s[0] for s in g.stores}
    with pytest.raises(UnsafeEscape):
        mmo_plan(g.create_call, [u for u in DefUse(f).users(g.create_call) if u not in own])


# -- dead runtime calls ----------------------------------------------------


def test_keyword_list():
    kw = DceKeywordList.parse("array_slice, get_element_ptr ,")
    assert kw.keywords == ["array_slice", "get_element_ptr"]
    assert kw.matches("array_slice_1d") and not kw.matches("qis__array_slice")
    assert DceKeywordList(["bogus_name"]).warnings()
    with pytest.raises(ValueError):
        DceKeywordList([" ", ""])


def test_dead_slice_cluster_goes():
    b = alloc(4)
    b("%s = call %Array* @array_slice_1d(%Array* %qs, %Range { i64 0, i64 1, i64 3 }, i1 true)")
    b("call void @array_update_alias_count(%Array* %s, i32 1)")
    b("%p = call i8* @array_get_element_ptr_1d(%Array* %s, i64 0)")
    b("%c = bitcast i8* %p to %Qubit**")
    m = finish(b)
    f = m.defined_functions()[0]
    assert len(qir_dce_removal_set(f)) == 4
    assert qir_dce(f) == 4
    assert [callee_canonical(i) for i in f.instructions() if i.opcode == "call"] == [
        "qubit_allocate_array", "qubit_release_array"]


def test_gep_feeding_a_store_into_an_array_stays():
    b = alloc()
    q = b.load("%qs", 0, gate=False)
    ctl(b, "a", q)
    m = finish(b)
    f = m.defined_functions()[0]
    kept = {i for i in f.instructions() if i.name and i.name.startswith("a.")}
    assert not kept & qir_dce_removal_set(f)


def test_dce_respects_keywords():
    b = alloc(4)
    b("%s = call %Array* @array_slice_1d(%Array* %qs, %Range { i64 0, i64 1, i64 3 }, i1 true)")
    m = finish(b)
    f = m.defined_functions()[0]
    assert qir_dce(f, ["get_element_ptr"]) == 0
    assert qir_dce(f, ["array_slice"]) == 1


@settings(max_examples=60)
@given(st.integers(0, 10**6), st.sampled_from([None, ["array_slice"], ["get_size", "get_element_ptr"]]))
def test_dce_matches_liveness_oracle(seed, keywords):
    m = parse_module(random_dce_function(seed))
    f = m.defined_functions()[0]
    kw = DceKeywordList(keywords) if keywords else None
    before = set(f.instructions())
    dead = oracle_dead_set(f, kw)
    while dce_pure(m) + qir_dce(f, keywords):
        pass
    assert before - set(f.instructions()) == dead
