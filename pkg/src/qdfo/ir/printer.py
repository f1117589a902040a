"""Deterministic text printer for the QIR subset."""

from __future__ import annotations

import re

from .model import (
    ArrayConst,
    BasicBlock,
    Function,
    GlobalVariable,
    Instruction,
    IntConst,
    NullConst,
    QirModule,
    RangeConst,
    StringConst,
    Value,
)
from .types import I1, VOID, ArrayType

_PLAIN_NAME = re.compile(r"^[-a-zA-Z$._0-9]+$")
_BARE_ATTR = re.compile(r"^[a-z][a-z0-9_]*(\(.*\))?$")


def _sym(sigil: str, name: str) -> str:
    if _PLAIN_NAME.match(name):
        return sigil + name
    return f'{sigil}"{name}"'


def ref(v: Value) -> str:
    if isinstance(v, (Function, GlobalVariable)):
        return _sym("@", v.name)
    if isinstance(v, IntConst):
        if v.type == I1:
            return "true" if v.value else "false"
        return str(v.value)
    if isinstance(v, NullConst):
        return "null"
    if isinstance(v, RangeConst):
        return f"{{ i64 {v.start}, i64 {v.step}, i64 {v.end} }}"
    if v.name is None:
        raise ValueError(f"cannot reference unnamed value {v!r}")
    return _sym("%", v.name)


def typed(v: Value) -> str:
    return f"{v.type} {ref(v)}"


def format_attrs(attrs) -> str:
    parts = []
    for a in sorted(attrs):
        if "=" in a:
            k, val = a.split("=", 1)
            parts.append(f'"{k}"="{val}"')
        elif _BARE_ATTR.match(a):
            parts.append(a)
        else:
            parts.append(f'"{a}"')
    return " ".join(parts)


def format_instruction(inst: Instruction) -> str:
    op = inst.opcode
    lhs = f"{ref(inst)} = " if inst.name is not None else ""
    if op == "call":
        callee = inst.callee
        flags = [a for a in ("tail", "musttail", "notail") if a in inst.attrs]
        prefix = (flags[0] + " ") if flags else ""
        ty = str(inst.callee.ret_type)
        if callee.varargs:
            ty = str(callee.type.pointee)
        args = ", ".join(typed(a) for a in inst.operands)
        rest = [a for a in inst.attrs if a not in ("tail", "musttail", "notail")]
        tail = (" " + format_attrs(rest)) if rest else ""
        return f"{lhs}{prefix}call {ty} {ref(callee)}({args}){tail}"
    if op == "load":
        s = f"{lhs}load {inst.type}, {typed(inst.operands[0])}"
        return s + (f", align {inst.align}" if inst.align is not None else "")
    if op == "store":
        s = f"store {typed(inst.operands[0])}, {typed(inst.operands[1])}"
        return s + (f", align {inst.align}" if inst.align is not None else "")
    if op == "bitcast":
        return f"{lhs}bitcast {typed(inst.operands[0])} to {inst.type}"
    if op == "br":
        if not inst.operands:
            return f"br label {_sym('%', inst.targets[0].name)}"
        t, f = inst.targets
        return (f"br {typed(inst.operands[0])}, label {_sym('%', t.name)}, "
                f"label {_sym('%', f.name)}")
    if op == "icmp":
        a, b = inst.operands
        return f"{lhs}icmp {inst.pred} {a.type} {ref(a)}, {ref(b)}"
    if op in ("add", "sub", "mul"):
        a, b = inst.operands
        flags = "".join(f" {f}" for f in ("nuw", "nsw") if f in inst.attrs)
        return f"{lhs}{op}{flags} {a.type} {ref(a)}, {ref(b)}"
    if op == "phi":
        pairs = ", ".join(f"[ {ref(v)}, {_sym('%', b.name)} ]" for v, b in zip(inst.operands, inst.incoming))
        return f"{lhs}phi {inst.type} {pairs}"
    if op == "ret":
        if not inst.operands:
            return "ret void"
        return f"ret {typed(inst.operands[0])}"
    if op == "getelementptr":
        ib = " inbounds" if "inbounds" in inst.attrs else ""
        ops = ", ".join(typed(v) for v in inst.operands)
        return f"{lhs}getelementptr{ib} {inst.source_type}, {ops}"
    raise ValueError(f"cannot print opcode {op!r}")


def _format_const(ty, c) -> str:
    if isinstance(c, ArrayConst):
        elem = c.type.element if isinstance(c.type, ArrayType) else None
        return "[" + ", ".join(f"{elem} {_format_const(elem, e)}" for e in c.elements) + "]"
    if isinstance(c, StringConst):
        return f'c"{c.raw}"'
    return ref(c)


def format_global(g: GlobalVariable) -> str:
    words = " ".join(g.linkage)
    kind = "constant" if g.is_constant else "global"
    head = f"{_sym('@', g.name)} = " + (words + " " if words else "") + f"{kind} {g.value_type}"
    if g.initializer is not None:
        head += " " + _format_const(g.value_type, g.initializer)
    if g.align is not None:
        head += f", align {g.align}"
    return head


def format_header(fn: Function) -> str:
    words = "".join(w + " " for w in fn.linkage)
    if fn.is_declaration:
        params = [str(t) for t in fn.param_types]
    else:
        params = [f"{p.type} {ref(p)}" for p in fn.params]
    if fn.varargs:
        params.append("...")
    attrs = format_attrs(fn.attrs)
    kw = "declare" if fn.is_declaration else "define"
    s = f"{kw} {words}{fn.ret_type} {_sym('@', fn.name)}({', '.join(params)})"
    return s + (" " + attrs if attrs else "")


def format_block(block: BasicBlock) -> list[str]:
    label = block.name if _PLAIN_NAME.match(block.name) else f'"{block.name}"'
    out = [f"{label}:"]
    out.extend("  " + format_instruction(i) for i in block.instructions)
    return out


def format_function(fn: Function) -> str:
    if fn.is_declaration:
        return format_header(fn)
    lines = [format_header(fn) + " {"]
    for k, block in enumerate(fn.blocks):
        if k:
            lines.append("")
        lines.extend(format_block(block))
    lines.append("}")
    return "\n".join(lines)


def print_module(m: QirModule) -> str:
    sections: list[str] = []
    if m.type_defs:
        sections.append("\n".join(
            f"%{name} = type {'opaque' if body is None else body}" for name, body in m.type_defs.items()))
    if m.globals:
        sections.append("\n".join(format_global(g) for g in m.globals))
    run: list[str] = []
    for f in m.functions:
        if f.is_declaration:
            run.append(format_header(f))
            continue
        if run:
            sections.append("\n".join(run))
            run = []
        sections.append(format_function(f))
    if run:
        sections.append("\n".join(run))
    return "\n\n".join(sections) + "\n"
