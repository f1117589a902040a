import pytest

from qdfo.dataflow import DefUse, DominatorInfo, Order, def_of, is_before, replace_all_uses, reverse_postorder
from qdfo.errors import DifferentFunctions, DominanceViolation, TypeMismatch
from qdfo.ir import IntConst, parse_module
from qdfo.ir.types import I1, I64

DIAMOND = """\
define i64 @f(i1 %c) {
entry:
  %a = add i64 1, 2
  br i1 %c, label %left, label %right
left:
  %l = add i64 %a, 1
  br label %join
right:
  %r = add i64 %a, 2
  br label %join
join:
  %p = phi i64 [ %l, %left ], [ %r, %right ]
  %s = add i64 %p, %a
  ret i64 %s
}

define void @g() {
entry:
  %x = add i64 0, 0
  ret void
}
"""


@pytest.fixture
def diamond():
    m = parse_module(DIAMOND)
    f = m.get_function("f")
    v = {i.name: i for i in f.instructions() if i.name}
    return m, f, v


def test_users_and_uses(diamond):
    _, f, v = diamond
    du = DefUse(f)
    assert {u.name for u in du.users(v["a"])} == {"l", "r", "s"}
    assert du.has_uses(v["p"])
    assert du.has_uses(v["s"])
    site = du.uses(v["l"])[0]
    assert site.user is v["p"] and site.value is v["l"]


def test_replace_through_def_use(diamond):
    _, f, v = diamond
    du = DefUse(f)
    k = IntConst(I64, 7)
    assert du.replace(v["a"], k) == 3
    assert v["s"].operands[1] is k
    assert not du.has_uses(v["a"])


def test_dominators(diamond):
    _, f, v = diamond
    dom = DominatorInfo(f)
    b = {blk.name: blk for blk in f.blocks}
    assert dom.dominates(b["entry"], b["join"])
    assert not dom.dominates(b["left"], b["join"])
    assert dom.dominates(b["join"], b["join"])
    assert dom.inst_dominates(v["a"], v["s"])
    assert dom.inst_dominates(v["l"], v["p"], 0)
    assert not dom.inst_dominates(v["l"], v["p"], 1)


def test_reverse_postorder_starts_at_entry(diamond):
    _, f, _ = diamond
    order = [b.name for b in reverse_postorder(f)]
    assert order[0] == "entry" and order[-1] == "join"
    assert set(order) == {"entry", "left", "right", "join"}


def test_is_before(diamond):
    m, f, v = diamond
    assert is_before(v["a"], v["s"]) is Order.A_BEFORE_B
    assert is_before(v["s"], v["a"]) is Order.B_BEFORE_A
    assert is_before(v["l"], v["r"]) is Order.UNORDERED
    assert is_before(v["a"], v["a"]) is Order.A_BEFORE_B
    other = next(m.get_function("g").instructions())
    with pytest.raises(DifferentFunctions):
        is_before(v["a"], other)


def test_replace_all_uses_checks_types_and_dominance(diamond):
    _, f, v = diamond
    with pytest.raises(TypeMismatch):
        replace_all_uses(v["a"], IntConst(I1, 1), f)
    with pytest.raises(DominanceViolation):
        replace_all_uses(v["a"], v["l"], f)
    assert v["s"].operands[1] is v["a"], "a failed replacement must not touch the function"
    assert replace_all_uses(v["p"], v["a"], f) == 1
    assert replace_all_uses(v["a"], v["a"], f) == 0


def test_def_of(diamond):
    _, f, v = diamond
    assert def_of(v["a"]) is v["a"]
    assert def_of(f.params[0]).argument is f.params[0]
