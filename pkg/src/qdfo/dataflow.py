"""Def-use chains, dominance, instruction ordering and replace-all-uses."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

from .errors import DanglingValue, DifferentFunctions, DominanceViolation, TypeMismatch
from .ir.model import Argument, BasicBlock, Constant, Function, GlobalVariable, Instruction, Value


class UseSite(NamedTuple):
    user: Instruction
    index: int

    @property
    def value(self) -> Value:
        return self.user.operands[self.index]


@dataclass(frozen=True)
class ArgumentDef:
    argument: Argument


class Order(enum.Enum):
    A_BEFORE_B = "ABeforeB"
    B_BEFORE_A = "BBeforeA"
    UNORDERED = "Unordered"


class DefUse:
    """Use lists for every value referenced in one function.

    Built in one sweep; stays valid only while the function is unchanged,
    except for edits made through :meth:`replace`. Constants are not tracked.
    """

    def __init__(self, f: Function):
        self.function = f
        uses: dict[Value, list[UseSite]] = {}
        for block in f.blocks:
            for inst in block.instructions:
                for k, op in enumerate(inst.operands):
                    if isinstance(op, Constant):
                        continue
                    site = UseSite(inst, k)
                    lst = uses.get(op)
                    if lst is None:
                        uses[op] = [site]
                    else:
                        lst.append(site)
        self._uses = uses

    def uses(self, v: Value) -> list[UseSite]:
        return [u for u in self._uses.get(v, ()) if u.user.parent is not None and u.user.operands[u.index] is v]

    def users(self, v: Value) -> list[Instruction]:
        out: list[Instruction] = []
        seen: set[Instruction] = set()
        for u in self.uses(v):
            if u.user not in seen:
                seen.add(u.user)
                out.append(u.user)
        return out

    def has_uses(self, v: Value) -> bool:
        return any(u.user.parent is not None and u.user.operands[u.index] is v for u in self._uses.get(v, ()))

    def replace(self, old: Value, new: Value) -> int:
        """Rewrite every use of ``old`` to ``new`` without legality checks."""
        sites = self.uses(old)
        for s in sites:
            s.user.operands[s.index] = new
        if sites:
            self._uses.setdefault(new, []).extend(sites)
        self._uses.pop(old, None)
        return len(sites)

    def forget(self, inst: Instruction) -> None:
        self._uses.pop(inst, None)


def uses_of(v: Value, f: Function) -> list[UseSite]:
    return DefUse(f).uses(v)


def def_of(v: Value) -> Union[Instruction, ArgumentDef, Constant, GlobalVariable, Function]:
    if isinstance(v, Instruction):
        if not is_live(v):
            raise DanglingValue(f"%{v.name} refers to an erased instruction")
        return v
    if isinstance(v, Argument):
        return ArgumentDef(v)
    if isinstance(v, (Constant, GlobalVariable, Function)):
        return v
    raise DanglingValue(f"{v!r} has no definition")


def is_live(inst: Instruction) -> bool:
    """Is ``inst`` still placed in a block of a function?"""
    block = inst.parent
    if block is None or block.parent is None:
        return False
    k = inst.ordinal
    if 0 <= k < len(block.instructions) and block.instructions[k] is inst:
        return True
    return any(i is inst for i in block.instructions)


def reverse_postorder(f: Function) -> list[BasicBlock]:
    if not f.blocks:
        return []
    seen: set[BasicBlock] = set()
    order: list[BasicBlock] = []
    stack = [(f.entry, iter(f.entry.successors))]
    seen.add(f.entry)
    while stack:
        block, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            order.append(block)
        elif nxt not in seen:
            seen.add(nxt)
            stack.append((nxt, iter(nxt.successors)))
    order.reverse()
    return order


class DominatorInfo:
    """Immediate dominators via the iterative Cooper-Harvey-Kennedy scheme."""

    def __init__(self, f: Function):
        self.function = f
        self.rpo = reverse_postorder(f)
        self.index = {b: i for i, b in enumerate(self.rpo)}
        preds = f.predecessors()
        idom: dict[BasicBlock, Optional[BasicBlock]] = {}
        if self.rpo:
            entry = self.rpo[0]
            idom[entry] = entry
            changed = True
            while changed:
                changed = False
                for b in self.rpo[1:]:
                    new = None
                    for p in preds.get(b, ()):
                        if p in idom:
                            new = p if new is None else self._intersect(p, new, idom)
                    if new is not None and idom.get(b) is not new:
                        idom[b] = new
                        changed = True
            idom[entry] = None
        self.idom = idom
        self.depth: dict[BasicBlock, int] = {}
        for b in self.rpo:
            parent = idom[b]
            self.depth[b] = 0 if parent is None else self.depth[parent] + 1

    def _intersect(self, a: BasicBlock, b: BasicBlock, idom) -> BasicBlock:
        ia, ib = self.index, self.index
        while a is not b:
            while ia[a] > ib[b]:
                a = idom[a]
            while ib[b] > ia[a]:
                b = idom[b]
        return a

    def reachable(self, b: BasicBlock) -> bool:
        return b in self.index

    def dominates(self, a: BasicBlock, b: BasicBlock) -> bool:
        """Reflexive block dominance; unreachable blocks dominate nothing."""
        if a is b:
            return True
        if a not in self.depth or b not in self.depth:
            return False
        da = self.depth[a]
        while self.depth[b] > da:
            b = self.idom[b]
        return a is b

    def inst_dominates(self, d: Instruction, user: Instruction, index: Optional[int] = None) -> bool:
        """Does the value defined by ``d`` reach operand ``index`` of ``user``?"""
        if user.opcode == "phi" and index is not None:
            return self.dominates(d.parent, user.incoming[index])
        if d.parent is user.parent:
            return d.ordinal < user.ordinal
        return self.dominates(d.parent, user.parent)


def is_before(a: Instruction, b: Instruction, dom: Optional[DominatorInfo] = None) -> Order:
    """Dominance-aware program order. ``is_before(a, a)`` is A_BEFORE_B by convention."""
    if a is b:
        return Order.A_BEFORE_B
    fa, fb = a.function, b.function
    if fa is None or fb is None or fa is not fb:
        raise DifferentFunctions("instructions are not in the same function")
    if a.parent is b.parent:
        return Order.A_BEFORE_B if a.ordinal < b.ordinal else Order.B_BEFORE_A
    dom = dom or DominatorInfo(fa)
    if dom.dominates(a.parent, b.parent):
        return Order.A_BEFORE_B
    if dom.dominates(b.parent, a.parent):
        return Order.B_BEFORE_A
    return Order.UNORDERED


def value_dominates_use(new: Value, site: UseSite, dom: DominatorInfo) -> bool:
    if isinstance(new, Instruction):
        if new.parent is None:
            return False
        return dom.inst_dominates(new, site.user, site.index)
    if isinstance(new, Argument):
        return new.function is site.user.function
    return True


def replace_all_uses(old: Value, new: Value, f: Function, *, dom: Optional[DominatorInfo] = None,
                     du: Optional[DefUse] = None) -> int:
    """Rewrite every use of ``old`` in ``f`` to ``new``.

    Raises TypeMismatch or DominanceViolation before touching anything.
    """
    if old is new:
        return 0
    if old.type != new.type:
        raise TypeMismatch(f"cannot replace {old.type} value with {new.type} value")
    du = du or DefUse(f)
    sites = du.uses(old)
    if not sites:
        return 0
    if isinstance(new, Instruction):
        dom = dom or DominatorInfo(f)
        for s in sites:
            if not value_dominates_use(new, s, dom):
                raise DominanceViolation(
                    f"%{new.name} does not dominate use in %{s.user.name or s.user.opcode}", s)
    return du.replace(old, new)
