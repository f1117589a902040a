"""Generic cleanup passes run between the QIR-aware stages.

These mimic the subset of a general-purpose optimizer that matters here:
always-inline inlining, constant folding with CFG simplification, full
unrolling of constant-trip loops and removal of dead side-effect-free
instructions. Calls are opaque to every pass in this module.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Optional

from .dataflow import DefUse, DominatorInfo, reverse_postorder
from .errors import Diagnostic, ExternalOptFailed
from .ir.model import (
    ArrayConst,
    BasicBlock,
    Function,
    GlobalVariable,
    Instruction,
    IntConst,
    QirModule,
    Value,
)
from .ir.types import I1, VOID, IntType

log = logging.getLogger(__name__)

EXTERNAL_OPT_ENV = "QDFO_EXTERNAL_OPT"


@dataclass
class CleanupConfig:
    max_unroll_trip_count: int = 4096
    max_inline_depth: int = 16
    external_opt_command: Optional[str] = None
    max_rounds: int = 8

    def __post_init__(self):
        if self.max_unroll_trip_count < 1:
            raise ValueError("max_unroll_trip_count must be at least 1")
        if self.max_inline_depth < 1:
            raise ValueError("max_inline_depth must be at least 1")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


@dataclass
class CleanupSummary:
    inlined: int = 0
    folded: int = 0
    unrolled: int = 0
    dce_removed: int = 0
    symbols_removed: int = 0
    tail_marked: int = 0
    forwarded: int = 0
    rounds: int = 0
    external: bool = False
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def total(self) -> int:
        return (self.inlined + self.folded + self.unrolled + self.dce_removed
                + self.symbols_removed + self.tail_marked + self.forwarded)

    def merge(self, other: "CleanupSummary") -> None:
        for k in ("inlined", "folded", "unrolled", "dce_removed", "symbols_removed", "tail_marked", "forwarded",
                  "rounds"):
            setattr(self, k, getattr(self, k) + getattr(other, k))
        self.diagnostics.extend(other.diagnostics)

    def as_dict(self) -> dict:
        return {
            "inlined": self.inlined,
            "folded": self.folded,
            "unrolled": self.unrolled,
            "dceRemoved": self.dce_removed,
            "symbolsRemoved": self.symbols_removed,
            "tailMarked": self.tail_marked,
            "forwarded": self.forwarded,
            "rounds": self.rounds,
        }


# ---------------------------------------------------------------------------
# shared helpers


def wrap_int(value: int, width: int) -> int:
    if width == 1:
        return value & 1
    mask = (1 << width) - 1
    value &= mask
    if value >> (width - 1):
        value -= 1 << width
    return value


def fold_binop(op: str, a: int, b: int, width: int) -> int:
    if op == "add":
        return wrap_int(a + b, width)
    if op == "sub":
        return wrap_int(a - b, width)
    return wrap_int(a * b, width)


def fold_icmp(pred: str, a: int, b: int, width: int) -> bool:
    if pred in ("ult", "ule", "ugt", "uge"):
        mask = (1 << width) - 1
        a, b = a & mask, b & mask
    if pred == "eq":
        return a == b
    if pred == "ne":
        return a != b
    if pred in ("slt", "ult"):
        return a < b
    if pred in ("sle", "ule"):
        return a <= b
    if pred in ("sgt", "ugt"):
        return a > b
    return a >= b


def try_fold(inst: Instruction, ops: Optional[list[Value]] = None) -> Optional[IntConst]:
    """Constant result of ``inst`` (with operands ``ops``), if it has one."""
    ops = inst.operands if ops is None else ops
    if inst.opcode in ("add", "sub", "mul"):
        a, b = ops
        if isinstance(a, IntConst) and isinstance(b, IntConst) and isinstance(inst.type, IntType):
            return IntConst(inst.type, fold_binop(inst.opcode, a.value, b.value, inst.type.width))
    elif inst.opcode == "icmp":
        a, b = ops
        if isinstance(a, IntConst) and isinstance(b, IntConst) and isinstance(a.type, IntType):
            return IntConst(I1, 1 if fold_icmp(inst.pred, a.value, b.value, a.type.width) else 0)
    return None


def clone_instruction(inst: Instruction, vmap: dict, bmap: dict, fn: Function, suffix: str) -> Instruction:
    name = fn.unique_name(inst.name, suffix) if inst.name is not None else None
    c = Instruction(
        inst.opcode,
        [vmap.get(o, o) for o in inst.operands],
        inst.type,
        name,
        callee=inst.callee,
        pred=inst.pred,
        targets=[bmap.get(b, b) for b in inst.targets],
        incoming=[bmap.get(b, b) for b in inst.incoming],
        source_type=inst.source_type,
        attrs=set(inst.attrs),
        align=inst.align,
    )
    vmap[inst] = c
    return c


def _retarget_phis(block: BasicBlock, old: BasicBlock, new: BasicBlock) -> None:
    for phi in block.phis():
        phi.incoming = [new if b is old else b for b in phi.incoming]


def _drop_phi_edge(block: BasicBlock, pred: BasicBlock) -> None:
    """Remove one incoming entry for ``pred`` from every phi in ``block``."""
    for phi in block.phis():
        for k, b in enumerate(phi.incoming):
            if b is pred:
                del phi.incoming[k]
                del phi.operands[k]
                break


def _resolve(mapping: dict, v: Value) -> Value:
    seen = 0
    while v in mapping and seen < 10000:
        v = mapping[v]
        seen += 1
    return v


def _apply_replacements(fn: Function, mapping: dict) -> None:
    if not mapping:
        return
    for inst in fn.instructions():
        ops = inst.operands
        for k, op in enumerate(ops):
            if op in mapping:
                ops[k] = _resolve(mapping, op)


# ---------------------------------------------------------------------------
# inlining


def _call_graph(m: QirModule) -> dict[Function, set[Function]]:
    graph: dict[Function, set[Function]] = {}
    for f in m.defined_functions():
        graph[f] = {i.callee for i in f.instructions() if i.opcode == "call" and not i.callee.is_declaration}
    return graph


def _recursive_functions(graph: dict[Function, set[Function]]) -> set[Function]:
    """Functions on a call-graph cycle (Tarjan's SCC)."""
    index: dict[Function, int] = {}
    low: dict[Function, int] = {}
    on_stack: set[Function] = set()
    stack: list[Function] = []
    out: set[Function] = set()
    counter = [0]

    def strongconnect(root: Function) -> None:
        work = [(root, iter(sorted(graph.get(root, ()), key=lambda f: f.name)))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            w = next(it, None)
            if w is not None:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(graph.get(w, ()), key=lambda f: f.name))))
                elif w in on_stack:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w is v:
                        break
                if len(comp) > 1 or v in graph.get(v, ()):
                    out.update(comp)

    for f in graph:
        if f not in index:
            strongconnect(f)
    return out


def _inline_into(caller: Function, targets: set[Function]) -> int:
    count = 0
    replacements: dict[Value, Value] = {}
    for block in list(caller.blocks):
        if not any(i.opcode == "call" and i.callee in targets for i in block.instructions):
            continue
        cur = block
        out: list[Instruction] = []
        for inst in block.instructions:
            if not (inst.opcode == "call" and inst.callee in targets):
                out.append(inst)
                continue
            callee = inst.callee
            count += 1
            vmap: dict[Value, Value] = {p: a for p, a in zip(callee.params, inst.operands)}
            if len(callee.blocks) == 1:
                for ci in callee.entry.instructions:
                    if ci.opcode == "ret":
                        if ci.operands and inst.name is not None:
                            replacements[inst] = vmap.get(ci.operands[0], ci.operands[0])
                        break
                    out.append(clone_instruction(ci, vmap, {}, caller, ".i"))
                inst.parent = None
                continue
            # Multi-block callee: split the current block around the call.
            bmap: dict[BasicBlock, BasicBlock] = {}
            anchor = cur
            for cb in callee.blocks:
                nb = BasicBlock(caller.unique_name(cb.name, ".i"), caller)
                caller.blocks.insert(caller.blocks.index(anchor) + 1, nb)
                anchor = nb
                bmap[cb] = nb
            cont = BasicBlock(caller.unique_name(f"{callee.name}.exit", ""), caller)
            caller.blocks.insert(caller.blocks.index(anchor) + 1, cont)
            out.append(Instruction("br", [], VOID, None, targets=[bmap[callee.entry]]))
            cur.set_instructions(out)
            returns: list[tuple[Value, BasicBlock]] = []
            clones: list[Instruction] = []
            for cb in callee.blocks:
                nb = bmap[cb]
                body = []
                for ci in cb.instructions:
                    if ci.opcode == "ret":
                        if ci.operands:
                            returns.append((ci.operands[0], nb))
                        body.append(Instruction("br", [], VOID, None, targets=[cont]))
                    else:
                        c = clone_instruction(ci, vmap, bmap, caller, ".i")
                        clones.append(c)
                        body.append(c)
                nb.set_instructions(body)
            for c in clones:
                c.operands = [vmap.get(o, o) for o in c.operands]
            out = []
            if inst.name is not None and returns:
                if len(returns) == 1:
                    replacements[inst] = vmap.get(returns[0][0], returns[0][0])
                else:
                    phi = Instruction("phi", [vmap.get(v, v) for v, _ in returns], inst.type,
                                      caller.unique_name(inst.name, ".i"), incoming=[b for _, b in returns])
                    out.append(phi)
                    replacements[inst] = phi
            inst.parent = None
            cur = cont
        cur.set_instructions(out)
        if cur is not block:
            for succ in cur.successors:
                _retarget_phis(succ, block, cur)
    _apply_replacements(caller, replacements)
    caller.renumber()
    return count


def inline_always(m: QirModule, cfg: Optional[CleanupConfig] = None,
                  diagnostics: Optional[list] = None) -> int:
    """Inline every direct call to a defined ``alwaysinline`` function."""
    cfg = cfg or CleanupConfig()
    flagged = {f for f in m.defined_functions() if "alwaysinline" in f.attrs}
    if not flagged:
        return 0
    recursive = _recursive_functions(_call_graph(m)) & flagged
    for f in sorted(recursive, key=lambda f: f.name):
        if diagnostics is not None:
            diagnostics.append(Diagnostic("RecursionDetected", "recursive function left out of line", f.name))
    targets = flagged - recursive
    total = 0
    for caller in m.defined_functions():
        allowed = targets - {caller}
        for _ in range(cfg.max_inline_depth):
            n = _inline_into(caller, allowed)
            total += n
            if n == 0:
                break
    if total:
        remove_unreferenced_symbols(m, only=flagged)
    return total


def _referenced_symbols(m: QirModule) -> set:
    refs: set = set()
    for f in m.defined_functions():
        for inst in f.instructions():
            if inst.callee is not None and inst.callee is not f:
                refs.add(inst.callee)
            for op in inst.operands:
                if isinstance(op, (Function, GlobalVariable)):
                    refs.add(op)
    for g in m.globals:
        if isinstance(g.initializer, ArrayConst):
            for e in g.initializer.elements:
                if isinstance(e, (Function, GlobalVariable)) and e is not g:
                    refs.add(e)
    return refs


def remove_unreferenced_symbols(m: QirModule, only: Optional[set] = None) -> int:
    """Drop internal functions and globals nothing refers to."""
    removed = 0
    while True:
        refs = _referenced_symbols(m)
        dead_f = [f for f in m.functions if f.is_internal and not f.is_declaration and f not in refs
                  and (only is None or f in only)]
        dead_g = [g for g in m.globals if g.is_internal and g not in refs and only is None]
        if not dead_f and not dead_g:
            return removed
        removed += len(dead_f) + len(dead_g)
        m.functions = [f for f in m.functions if f not in dead_f]
        m.globals = [g for g in m.globals if g not in dead_g]


# ---------------------------------------------------------------------------
# constant folding and CFG simplification


def _value_key(v: Value):
    if isinstance(v, IntConst):
        return ("int", v.type, v.value)
    return ("id", id(v))


def _fold_function(fn: Function) -> int:
    changes = 0
    while True:
        step = 0
        # Instruction folding.
        du = None
        doomed: set[Instruction] = set()
        for inst in fn.instructions():
            c = try_fold(inst)
            if c is not None:
                du = du or DefUse(fn)
                du.replace(inst, c)
                doomed.add(inst)
        if doomed:
            fn.remove_instructions(doomed)
            step += len(doomed)
        # Constant branches.
        for block in fn.blocks:
            term = block.terminator
            if term is not None and term.opcode == "br" and term.operands and isinstance(term.operands[0], IntConst):
                taken = term.targets[0] if term.operands[0].value else term.targets[1]
                dropped = term.targets[1] if term.operands[0].value else term.targets[0]
                if dropped is not taken:
                    _drop_phi_edge(dropped, block)
                term.operands = []
                term.targets = [taken]
                step += 1
            elif term is not None and term.opcode == "br" and len(term.targets) == 2 and term.targets[0] is term.targets[1]:
                term.operands = []
                term.targets = term.targets[:1]
                step += 1
        # Unreachable blocks.
        reachable = set(reverse_postorder(fn))
        dead_blocks = [b for b in fn.blocks if b not in reachable]
        if dead_blocks:
            for b in dead_blocks:
                for succ in b.successors:
                    if succ in reachable:
                        while any(x is b for phi in succ.phis() for x in phi.incoming):
                            _drop_phi_edge(succ, b)
                for inst in b.instructions:
                    inst.parent = None
            fn.blocks = [b for b in fn.blocks if b in reachable]
            step += len(dead_blocks)
        # Trivial phis.
        preds = fn.predecessors()
        replaced: dict[Value, Value] = {}
        doomed = set()
        for block in fn.blocks:
            for phi in block.phis():
                vals = {_value_key(v): v for v in phi.operands if v is not phi}
                if len(vals) == 1:
                    replaced[phi] = next(iter(vals.values()))
                    doomed.add(phi)
                elif not vals and len(preds.get(block, ())) == 0:
                    doomed.add(phi)
        if doomed:
            _apply_replacements(fn, replaced)
            fn.remove_instructions(doomed)
            step += len(doomed)
        # Merge a block into its sole predecessor when that edge is the only one.
        preds = fn.predecessors()
        merged_away: set[BasicBlock] = set()
        for block in list(fn.blocks):
            if block in merged_away:
                continue
            while True:
                term = block.terminator
                if term is None or term.opcode != "br" or term.operands:
                    break
                succ = term.targets[0]
                if succ is block or succ is fn.entry or len(preds.get(succ, ())) != 1 or succ.phis():
                    break
                insts = block.instructions[:-1] + succ.instructions
                term.parent = None
                block.set_instructions(insts)
                for nxt in succ.successors:
                    _retarget_phis(nxt, succ, block)
                    preds[nxt] = [block if p is succ else p for p in preds.get(nxt, ())]
                merged_away.add(succ)
                step += 1
        if merged_away:
            fn.blocks = [b for b in fn.blocks if b not in merged_away]
        fn.renumber()
        if not step:
            return changes
        changes += step


def fold_constants_and_simplify(m: QirModule) -> int:
    return sum(_fold_function(f) for f in m.defined_functions())


# ---------------------------------------------------------------------------
# store forwarding through fresh tuples


def _tuple_fields(t: Instruction, du: DefUse) -> Optional[dict]:
    """Field accesses of a fresh tuple, or None when it may be written elsewhere."""
    from .ir.names import callee_canonical, is_management

    fields: dict[tuple, tuple[list, list]] = {}
    shape = None
    for user in du.users(t):
        if user.opcode == "call":
            if is_management(callee_canonical(user)) and user.operands[0] is t \
                    and not any(op is t for op in user.operands[1:]):
                continue
            return None
        if user.opcode != "bitcast":
            return None
        if shape is not None and user.type != shape:
            return None
        shape = user.type
        for gep in du.users(user):
            if gep.opcode != "getelementptr" or gep.operands[0] is not user \
                    or not all(isinstance(x, IntConst) for x in gep.operands[1:]):
                return None
            key = tuple(x.value for x in gep.operands[1:])
            loads, stores = fields.setdefault(key, ([], []))
            for acc in du.users(gep):
                if acc.opcode == "load" and acc.operands[0] is gep:
                    loads.append(acc)
                elif acc.opcode == "store" and acc.operands[1] is gep and acc.operands[0] is not gep:
                    stores.append(acc)
                else:
                    return None
    return fields


def forward_tuple_stores(fn: Function) -> int:
    """Replace loads from a fresh tuple's field with the single value stored there."""
    from .ir.names import TUPLE_CREATE, is_call_to

    creates = [i for i in fn.instructions() if is_call_to(i, TUPLE_CREATE)]
    if not creates:
        return 0
    du = DefUse(fn)
    dom = None
    n = 0
    for t in creates:
        fields = _tuple_fields(t, du)
        if not fields:
            continue
        for loads, stores in fields.values():
            if len(stores) != 1 or not loads:
                continue
            st = stores[0]
            for ld in loads:
                if ld.parent is st.parent:
                    ok = st.ordinal < ld.ordinal
                else:
                    dom = dom or DominatorInfo(fn)
                    ok = dom.dominates(st.parent, ld.parent)
                if ok and ld.type == st.operands[0].type:
                    du.replace(ld, st.operands[0])
                    n += 1
    return n


# ---------------------------------------------------------------------------
# loop unrolling


@dataclass
class _Loop:
    header: BasicBlock
    latch: BasicBlock  # header itself for a self loop
    preheader: BasicBlock
    exit: BasicBlock


def _find_loops(fn: Function) -> list[_Loop]:
    preds = fn.predecessors()
    loops = []
    for h in fn.blocks:
        ps = preds.get(h, [])
        if len(ps) != 2:
            continue
        term = h.terminator
        if term is None or term.opcode != "br" or len(term.targets) != 2:
            continue
        for latch in ps:
            pre = ps[1] if latch is ps[0] else ps[0]
            if pre is latch:
                continue
            if latch is not h:
                lt = latch.terminator
                if (preds.get(latch) != [h] or lt is None or lt.opcode != "br" or lt.operands
                        or lt.targets[0] is not h):
                    continue
            inner = [t for t in term.targets if t is latch]
            outer = [t for t in term.targets if t is not latch]
            if len(inner) != 1 or len(outer) != 1:
                continue
            ex = outer[0]
            if ex is h or pre is h:
                continue
            pt = pre.terminator
            if pt is None or pt.opcode != "br" or pt.operands or pt.targets[0] is not h:
                continue
            loops.append(_Loop(h, latch, pre, ex))
            break
    return loops


def _unroll(fn: Function, loop: _Loop, cfg: CleanupConfig, diagnostics) -> bool:
    h, latch, pre, ex = loop.header, loop.latch, loop.preheader, loop.exit
    if latch is not h and latch.phis():
        return False
    phis = h.phis()
    k_pre = {phi: phi.incoming.index(pre) for phi in phis}
    k_latch = {phi: phi.incoming.index(latch) for phi in phis}
    env: dict[Value, Value] = {phi: phi.operands[k_pre[phi]] for phi in phis}
    body_h = [i for i in h.instructions if i.opcode != "phi" and not i.is_terminator]
    body_l = [] if latch is h else [i for i in latch.instructions if not i.is_terminator]
    cond_inst = h.terminator
    emitted: list[Instruction] = []
    trips = 0

    def run(insts, vmap):
        for inst in insts:
            ops = [vmap.get(o, o) for o in inst.operands]
            c = try_fold(inst, ops)
            if c is not None:
                vmap[inst] = c
                continue
            clone = clone_instruction(inst, vmap, {}, fn, ".")
            clone.operands = ops
            emitted.append(clone)

    def abort(reason: str) -> bool:
        for inst in emitted:
            inst.parent = None
        fn._names = None
        fn._load_names()
        if diagnostics is not None:
            diagnostics.append(Diagnostic("LoopNotUnrolled", reason, fn.name, h.name))
        return False

    mapping: dict[Value, Value] = {}
    while True:
        vmap: dict[Value, Value] = dict(env)
        run(body_h, vmap)
        cond = vmap.get(cond_inst.operands[0], cond_inst.operands[0])
        if not isinstance(cond, IntConst):
            return abort("loop condition does not fold to a constant")
        taken = cond_inst.targets[0] if cond.value else cond_inst.targets[1]
        if taken is ex:
            mapping = vmap
            break
        trips += 1
        if trips > cfg.max_unroll_trip_count:
            return abort(f"trip count exceeds {cfg.max_unroll_trip_count}")
        run(body_l, vmap)
        env = {phi: vmap.get(phi.operands[k_latch[phi]], phi.operands[k_latch[phi]]) for phi in phis}
    # Rewire: preheader runs the straight-line copy then jumps to the exit.
    pre_term = pre.terminator
    pre_term.targets = [ex]
    pre.set_instructions(pre.instructions[:-1] + emitted + [pre_term])
    for phi in ex.phis():
        for k, b in enumerate(phi.incoming):
            if b is h:
                phi.incoming[k] = pre
                phi.operands[k] = mapping.get(phi.operands[k], phi.operands[k])
    loop_values = set(phis) | set(body_h)
    outside = {v: mapping.get(v, v) for v in loop_values}
    loop_blocks = {h, latch}
    for block in fn.blocks:
        if block in loop_blocks:
            continue
        for inst in block.instructions:
            ops = inst.operands
            for k, op in enumerate(ops):
                if op in outside:
                    ops[k] = outside[op]
    for b in loop_blocks:
        for inst in b.instructions:
            inst.parent = None
    fn.blocks = [b for b in fn.blocks if b not in loop_blocks]
    fn.renumber()
    return True


def unroll_constant_loops(m: QirModule, cfg: Optional[CleanupConfig] = None,
                          diagnostics: Optional[list] = None) -> int:
    """Fully unroll single-latch loops whose trip count folds to a constant."""
    cfg = cfg or CleanupConfig()
    count = 0
    for fn in m.defined_functions():
        progress = True
        failed: set[BasicBlock] = set()
        while progress:
            progress = False
            for loop in _find_loops(fn):
                if loop.header in failed:
                    continue
                if _unroll(fn, loop, cfg, diagnostics):
                    count += 1
                    progress = True
                    break
                failed.add(loop.header)
    return count


# ---------------------------------------------------------------------------
# dead code elimination of pure instructions


def dead_pure_instructions(fn: Function) -> set[Instruction]:
    live: set[Instruction] = set()
    work: list[Instruction] = []
    for inst in fn.instructions():
        if not inst.is_pure:
            live.add(inst)
            work.append(inst)
    while work:
        inst = work.pop()
        for op in inst.operands:
            if isinstance(op, Instruction) and op not in live and op.parent is not None:
                live.add(op)
                work.append(op)
    return {i for i in fn.instructions() if i not in live}


def dce_pure(m: QirModule) -> int:
    """Remove side-effect-free instructions whose results are never needed."""
    removed = 0
    for fn in m.defined_functions():
        dead = dead_pure_instructions(fn)
        removed += fn.remove_instructions(dead)
    return removed


def mark_tail_calls(m: QirModule) -> int:
    """Flag calls as ``tail``: the subset has no stack allocations to protect."""
    n = 0
    for fn in m.defined_functions():
        for inst in fn.instructions():
            if inst.opcode == "call" and not inst.attrs & {"tail", "musttail", "notail"}:
                inst.attrs.add("tail")
                n += 1
    return n


def renumber_locals(fn: Function) -> None:
    """Give numerically named locals consecutive numbers in textual order."""
    order: list = [p for p in fn.params]
    for b in fn.blocks:
        order.append(b)
        order.extend(b.instructions)
    k = 0
    for item in order:
        name = item.name
        if name is not None and name.isdigit():
            item.name = str(k)
            k += 1
    fn._names = None


# ---------------------------------------------------------------------------
# driver


def run_external(m: QirModule, command: str) -> None:
    from .ir.parser import parse_module
    from .ir.printer import print_module

    for f in m.defined_functions():
        renumber_locals(f)
    with tempfile.TemporaryDirectory(prefix="qdfo-") as tmp:
        src = os.path.join(tmp, "input.ll")
        dst = os.path.join(tmp, "output.ll")
        with open(src, "w", encoding="utf-8") as fh:
            fh.write(print_module(m))
        if "{input}" in command or "{output}" in command:
            argv = [a.format(input=src, output=dst) for a in shlex.split(command)]
        else:
            argv = shlex.split(command) + [src, "-o", dst]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as exc:
            raise ExternalOptFailed(127, str(exc)) from None
        if proc.returncode != 0:
            raise ExternalOptFailed(proc.returncode, proc.stderr)
        with open(dst, encoding="utf-8") as fh:
            m.replace_contents(parse_module(fh.read()))


def run_cleanup(m: QirModule, cfg: Optional[CleanupConfig] = None) -> CleanupSummary:
    """Run the cleanup passes until a round changes nothing."""
    cfg = cfg or CleanupConfig()
    summary = CleanupSummary()
    command = cfg.external_opt_command or os.environ.get(EXTERNAL_OPT_ENV)
    if command:
        run_external(m, command)
        summary.external = True
        return summary
    for _ in range(cfg.max_rounds):
        r = CleanupSummary()
        r.inlined = inline_always(m, cfg, r.diagnostics)
        r.folded = fold_constants_and_simplify(m)
        r.forwarded = sum(forward_tuple_stores(f) for f in m.defined_functions())
        r.unrolled = unroll_constant_loops(m, cfg, r.diagnostics)
        if r.unrolled:
            r.folded += fold_constants_and_simplify(m)
        r.dce_removed = dce_pure(m)
        r.symbols_removed = remove_unreferenced_symbols(m)
        r.tail_marked = mark_tail_calls(m)
        productive = r.total > 0
        diags = r.diagnostics
        r.diagnostics = []
        summary.merge(r)
        if not productive:
            summary.diagnostics.extend(diags)
            break
        summary.rounds += 1
    else:
        summary.diagnostics.append(Diagnostic("CleanupBound", f"still changing after {cfg.max_rounds} rounds"))
    for f in m.defined_functions():
        renumber_locals(f)
    return summary
