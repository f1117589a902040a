"""Structural checks over a module. Returns diagnostics instead of raising."""

from __future__ import annotations

from ..errors import Diagnostic
from .model import (
    Argument,
    ArrayConst,
    Constant,
    Function,
    GlobalVariable,
    Instruction,
    IntConst,
    QirModule,
)
from .names import CALLABLE_CREATE, callee_canonical
from .types import (
    ALLOWED_INT_WIDTHS,
    I1,
    VOID,
    ArrayType,
    FunctionType,
    IntType,
    PointerType,
    StructType,
)

MAX_POINTER_DEPTH = 2


def _walk_types(t, out):
    out.append(t)
    if isinstance(t, PointerType):
        _walk_types(t.pointee, out)
    elif isinstance(t, StructType):
        for f in t.fields:
            _walk_types(f, out)
    elif isinstance(t, ArrayType):
        _walk_types(t.element, out)
    elif isinstance(t, FunctionType):
        _walk_types(t.ret, out)
        for p in t.params:
            _walk_types(p, out)


def _type_problems(t) -> list[str]:
    found = []
    parts: list = []
    _walk_types(t, parts)
    for p in parts:
        if isinstance(p, IntType) and p.width not in ALLOWED_INT_WIDTHS:
            found.append(f"integer width i{p.width} is outside the subset")
        if isinstance(p, PointerType) and p.depth > MAX_POINTER_DEPTH:
            found.append(f"pointer type {p} nests deeper than {MAX_POINTER_DEPTH}")
    return found


def _is_fn_ptr(t) -> bool:
    return isinstance(t, PointerType) and isinstance(t.pointee, FunctionType)


def validate(m: QirModule) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def add(code, message, fn=None, loc=None):
        diags.append(Diagnostic(code, message, fn, loc))

    symbols: set[str] = set()
    for g in list(m.globals) + list(m.functions):
        if g.name in symbols:
            add("DuplicateSymbol", f"@{g.name} defined more than once")
        symbols.add(g.name)

    table_globals = set()
    for f in m.defined_functions():
        for inst in f.instructions():
            if inst.opcode == "call" and callee_canonical(inst) == CALLABLE_CREATE and inst.operands:
                if isinstance(inst.operands[0], GlobalVariable):
                    table_globals.add(inst.operands[0])
    for g in m.globals:
        for msg in _type_problems(g.value_type):
            add("InvalidType", f"@{g.name}: {msg}")
        is_table = g.name.endswith("FunctionTable") or g in table_globals
        if is_table:
            vt = g.value_type
            ok = (isinstance(vt, ArrayType) and vt.count == 4 and _is_fn_ptr(vt.element)
                  and isinstance(g.initializer, ArrayConst) and len(g.initializer.elements) == 4)
            if not ok:
                add("MalformedFunctionTable", f"@{g.name} is not a 4-slot table of function references")
        if isinstance(g.initializer, ArrayConst):
            for e in g.initializer.elements:
                if isinstance(e, Function) and e not in m.functions:
                    add("UnresolvedSymbol", f"@{g.name} references unknown @{e.name}")

    fn_set = set(m.functions)
    for f in m.functions:
        for t in [f.ret_type, *f.param_types]:
            for msg in _type_problems(t):
                add("InvalidType", msg, f.name)
        if not f.is_declaration:
            _validate_function(f, m, fn_set, add)
    return diags


def _validate_function(f: Function, m: QirModule, fn_set, add) -> None:
    from ..dataflow import DominatorInfo

    names: dict[str, object] = {}
    for p in f.params:
        if p.name is not None:
            if p.name in names:
                add("DuplicateSSAName", f"parameter %{p.name} repeated", f.name)
            names[p.name] = p
    block_names: set[str] = set()
    block_set = set(f.blocks)
    defined: set[Instruction] = set()
    for block in f.blocks:
        if block.name in block_names:
            add("DuplicateBlockName", f"block {block.name} repeated", f.name, block.name)
        block_names.add(block.name)
        if block.parent is not f:
            add("BadParent", f"block {block.name} has the wrong parent", f.name, block.name)
        for k, inst in enumerate(block.instructions):
            loc = f"{block.name}#{k}"
            defined.add(inst)
            if inst.parent is not block or inst.ordinal != k:
                add("OrdinalMismatch", f"instruction {inst.opcode} has stale position", f.name, loc)
            if inst.name is not None:
                if inst.name in names:
                    add("DuplicateSSAName", f"%{inst.name} defined more than once", f.name, loc)
                names[inst.name] = inst
                if inst.opcode in ("store", "br", "ret") or inst.type == VOID:
                    add("ResultOnVoid", f"{inst.opcode} cannot define %{inst.name}", f.name, loc)
            if inst.is_terminator and k != len(block.instructions) - 1:
                add("TerminatorNotLast", f"{inst.opcode} in the middle of block", f.name, loc)
            for msg in _type_problems(inst.type):
                add("InvalidType", msg, f.name, loc)
        if block.terminator is None:
            add("MissingTerminator", f"block {block.name} does not end in br or ret", f.name, block.name)
        seen_non_phi = False
        for inst in block.instructions:
            if inst.opcode == "phi":
                if seen_non_phi:
                    add("PhiNotAtTop", f"phi %{inst.name} after a non-phi", f.name, block.name)
            else:
                seen_non_phi = True

    preds = f.predecessors()
    if f.blocks and preds.get(f.entry):
        add("EntryBlockTarget", "the entry block is a branch target", f.name, f.entry.name)
    for block in f.blocks[1:]:
        if not preds.get(block):
            add("UnreachableBlock", f"block {block.name} has no predecessors", f.name, block.name)
    for block in f.blocks:
        term = block.terminator
        if term is not None and term.opcode == "br":
            for t in term.targets:
                if t not in block_set:
                    add("UnknownBlock", f"branch to block {t.name} outside the function", f.name, block.name)

    dom = DominatorInfo(f)
    for block in f.blocks:
        for inst in block.instructions:
            loc = f"{block.name}#{inst.ordinal}"
            for k, op in enumerate(inst.operands):
                if isinstance(op, Instruction):
                    if op not in defined:
                        add("DanglingOperand", f"operand {k} of {inst.opcode} refers to an erased or foreign value",
                            f.name, loc)
                    elif dom.reachable(block) and not dom.inst_dominates(op, inst, k):
                        add("UseNotDominated", f"%{op.name} does not dominate its use in {inst.opcode}",
                            f.name, loc)
                elif isinstance(op, Argument):
                    if op.function is not f:
                        add("DanglingOperand", f"argument %{op.name} belongs to another function", f.name, loc)
                elif isinstance(op, Function):
                    if op not in fn_set:
                        add("UnresolvedSymbol", f"@{op.name} is not in the module", f.name, loc)
                elif isinstance(op, GlobalVariable):
                    if op not in m.globals:
                        add("UnresolvedSymbol", f"@{op.name} is not in the module", f.name, loc)
                elif not isinstance(op, Constant):
                    add("DanglingOperand", f"operand {k} of {inst.opcode} is unresolved", f.name, loc)
            _check_types(inst, f, fn_set, add, loc)
            if inst.opcode == "phi":
                want = sorted(id(p) for p in preds.get(block, ()))
                have = sorted(id(b) for b in inst.incoming)
                if want != have:
                    add("PhiMismatch", f"phi %{inst.name} incoming blocks do not match predecessors",
                        f.name, loc)


def _check_types(inst: Instruction, f: Function, fn_set, add, loc) -> None:
    op = inst.opcode
    ops = inst.operands

    def bad(msg):
        add("OperandTypeMismatch", msg, f.name, loc)

    if op == "call":
        callee = inst.callee
        if callee is None:
            bad("call without callee")
            return
        if callee not in fn_set:
            add("UnresolvedSymbol", f"callee @{callee.name} is not in the module", f.name, loc)
        params = callee.param_types
        if len(ops) < len(params) or (len(ops) > len(params) and not callee.varargs):
            bad(f"@{callee.name} expects {len(params)} arguments, got {len(ops)}")
        for k, (p, a) in enumerate(zip(params, ops)):
            if p != a.type:
                bad(f"argument {k} of @{callee.name} is {a.type}, expected {p}")
        if inst.type != callee.ret_type:
            bad(f"call result typed {inst.type}, callee returns {callee.ret_type}")
    elif op == "load":
        if len(ops) != 1 or ops[0].type != PointerType(inst.type):
            bad("load pointer does not match the loaded type")
    elif op == "store":
        if len(ops) != 2 or ops[1].type != PointerType(ops[0].type):
            bad("store pointer does not match the stored type")
    elif op == "bitcast":
        if len(ops) != 1 or not isinstance(ops[0].type, PointerType) or not isinstance(inst.type, PointerType):
            bad("bitcast is only supported between pointer types")
    elif op == "br":
        if len(ops) == 1:
            if ops[0].type != I1 or len(inst.targets) != 2:
                bad("conditional branch needs an i1 condition and two targets")
        elif ops or len(inst.targets) != 1:
            bad("malformed branch")
    elif op == "icmp":
        if len(ops) != 2 or ops[0].type != ops[1].type or not isinstance(ops[0].type, IntType):
            bad("icmp operands must be integers of one type")
    elif op in ("add", "sub", "mul"):
        if len(ops) != 2 or not (ops[0].type == ops[1].type == inst.type) or not isinstance(inst.type, IntType):
            bad(f"{op} operands must match the result type")
    elif op == "phi":
        if len(ops) != len(inst.incoming) or any(v.type != inst.type for v in ops):
            bad("phi incoming values must match the phi type")
    elif op == "ret":
        rt = ops[0].type if ops else VOID
        if rt != f.ret_type:
            bad(f"ret {rt} in function returning {f.ret_type}")
    elif op == "getelementptr":
        if not ops or ops[0].type != PointerType(inst.source_type) or any(not isinstance(i, IntConst) for i in ops[1:]):
            bad("getelementptr needs a matching pointer and constant indices")
    else:
        bad(f"unknown opcode {op}")
