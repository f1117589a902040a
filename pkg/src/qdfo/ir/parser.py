"""Line-oriented parser for the textual QIR subset (see docs/ir-subset.md)."""

from __future__ import annotations

import re
from typing import Optional

from ..errors import ParseError, UnsupportedConstruct
from .model import (
    BINOPS,
    ICMP_PREDICATES,
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
from .types import (
    I1,
    RANGE,
    VOID,
    ArrayType,
    FunctionType,
    IntType,
    NamedType,
    PointerType,
    QirType,
    StructType,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<local>%(?:"[^"]*"|[-a-zA-Z$._0-9]+))
  | (?P<punct>[(){}\[\],=*:<>|])
  | (?P<string>c?"[^"]*")
  | (?P<word>[a-zA-Z_$.][-a-zA-Z$._0-9]*)
  | (?P<int>-?\d+)
  | (?P<global>@(?:"[^"]*"|[-a-zA-Z$._0-9]+))
  | (?P<comment>;.*)
  | (?P<group>\#\d+)
  | (?P<meta>![-a-zA-Z$._0-9]*)
  | (?P<ellipsis>\.\.\.)
    """,
    re.VERBOSE,
)

_LABEL = re.compile(r'^\s*([-a-zA-Z$._0-9]+|"[^"]*")\s*:(?:\s*;.*)?\s*$')

LINKAGE_WORDS = frozenset({
    "private", "internal", "external", "weak", "linkonce", "linkonce_odr", "weak_odr",
    "available_externally", "appending", "common", "extern_weak", "dso_local",
    "dso_preemptable", "hidden", "protected", "default",
})
CALLING_CONVENTIONS = frozenset({"ccc", "fastcc", "coldcc"})
PARAM_ATTR_WORDS = frozenset({
    "noundef", "nonnull", "nocapture", "readonly", "writeonly", "readnone", "signext",
    "zeroext", "inreg", "returned", "noalias", "immarg", "nofree", "nest",
})
UNSUPPORTED_OPCODES = frozenset({
    "invoke", "landingpad", "switch", "unreachable", "alloca", "select", "extractvalue",
    "insertvalue", "zext", "sext", "trunc", "ptrtoint", "inttoptr", "and", "or", "xor",
    "shl", "lshr", "ashr", "udiv", "sdiv", "urem", "srem", "fadd", "fsub", "fmul", "fdiv",
    "frem", "fcmp", "fneg", "atomicrmw", "cmpxchg", "fence", "resume", "indirectbr",
    "callbr", "va_arg", "extractelement", "insertelement", "shufflevector", "freeze",
    "addrspacecast", "fptrunc", "fpext", "fptoui", "fptosi", "uitofp", "sitofp",
    "catchswitch", "catchret", "cleanupret", "catchpad", "cleanuppad",
})
CONST_EXPR_WORDS = frozenset({"getelementptr", "bitcast", "ptrtoint", "inttoptr", "select"})


class _Tok:
    __slots__ = ("kind", "text", "col")

    def __init__(self, kind: str, text: str, col: int):
        self.kind, self.text, self.col = kind, text, col

    def __repr__(self) -> str:
        return f"{self.kind}:{self.text}"


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    out: list[_Tok] = []
    pos, end = 0, len(line)
    for m in _TOKEN.finditer(line):
        if m.start() != pos:
            break
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws" or kind == "comment":
            continue
        if kind == "meta":
            raise UnsupportedConstruct("metadata", lineno, m.start() + 1)
        out.append(_Tok(kind, m.group(), m.start() + 1))
    if pos != end:
        raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
    return out


def _strip_sigil(text: str) -> str:
    body = text[1:]
    if body.startswith('"') and body.endswith('"'):
        return body[1:-1]
    return body


class _Forward(Value):
    """Stand-in for a local referenced before its definition."""

    __slots__ = ("line", "col")


class _Cursor:
    def __init__(self, toks: list[_Tok], lineno: int, parser: "Parser"):
        self.toks = toks
        self.pos = 0
        self.lineno = lineno
        self.parser = parser

    # -- primitives -----------------------------------------------------

    def peek(self, k: int = 0) -> Optional[_Tok]:
        i = self.pos + k
        return self.toks[i] if i < len(self.toks) else None

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text

    def at_kind(self, kind: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == kind

    def next(self) -> _Tok:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of line")
        self.pos += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t is None or t.text != text:
            raise self.error(f"expected {text!r}, found {t.text if t else 'end of line'!r}")
        self.pos += 1
        return t

    def expect_kind(self, kind: str, what: str) -> _Tok:
        t = self.peek()
        if t is None or t.kind != kind:
            raise self.error(f"expected {what}, found {t.text if t else 'end of line'!r}")
        self.pos += 1
        return t

    def done(self) -> bool:
        return self.pos >= len(self.toks)

    def expect_end(self) -> None:
        if not self.done():
            t = self.peek()
            raise ParseError(f"unexpected token {t.text!r}", self.lineno, t.col)

    def col(self) -> int:
        t = self.peek()
        return t.col if t is not None else (self.toks[-1].col + len(self.toks[-1].text) if self.toks else 1)

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.lineno, self.col())

    def unsupported(self, construct: str) -> UnsupportedConstruct:
        return UnsupportedConstruct(construct, self.lineno, self.col())

    # -- types ----------------------------------------------------------

    def parse_type(self) -> QirType:
        t = self.next()
        ty: QirType
        if t.text == "void":
            ty = VOID
        elif t.kind == "word" and re.fullmatch(r"i\d+", t.text):
            ty = IntType(int(t.text[1:]))
        elif t.kind == "local":
            ty = NamedType(_strip_sigil(t.text))
        elif t.text == "{":
            fields: list[QirType] = []
            if not self.accept("}"):
                fields.append(self.parse_type())
                while self.accept(","):
                    fields.append(self.parse_type())
                self.expect("}")
            ty = StructType(tuple(fields))
        elif t.text == "[":
            n = int(self.expect_kind("int", "array length").text)
            self.expect("x")
            elem = self.parse_type()
            self.expect("]")
            ty = ArrayType(n, elem)
        elif t.text == "<":
            self.pos -= 1
            raise self.unsupported("vector or packed type")
        elif t.text == "ptr":
            self.pos -= 1
            raise self.unsupported("opaque pointer type")
        elif t.text in ("float", "double", "half", "fp128", "x86_fp80", "bfloat"):
            self.pos -= 1
            raise self.unsupported(f"floating-point type {t.text}")
        else:
            self.pos -= 1
            raise self.error(f"expected a type, found {t.text!r}")
        while True:
            if self.accept("*"):
                ty = PointerType(ty)
            elif self.at("addrspace"):
                raise self.unsupported("addrspace")
            elif self.at("("):
                ty = self._parse_fn_type_tail(ty)
            else:
                return ty

    def _parse_fn_type_tail(self, ret: QirType) -> FunctionType:
        self.expect("(")
        params: list[QirType] = []
        varargs = False
        if not self.accept(")"):
            while True:
                if self.accept("..."):
                    varargs = True
                    break
                params.append(self.parse_type())
                if not self.accept(","):
                    break
            self.expect(")")
        return FunctionType(ret, tuple(params), varargs)

    def skip_param_attrs(self) -> None:
        while True:
            t = self.peek()
            if t is None or t.kind != "word":
                return
            if t.text in PARAM_ATTR_WORDS:
                self.pos += 1
            elif t.text == "align" and self.peek(1) is not None and self.peek(1).kind == "int":
                self.pos += 2
            elif t.text in ("dereferenceable", "dereferenceable_or_null", "align") and self.peek(1) is not None and self.peek(1).text == "(":
                self.pos += 2
                while not self.accept(")"):
                    self.next()
            else:
                return

    # -- values ---------------------------------------------------------

    def parse_value(self, ty: QirType) -> Value:
        t = self.peek()
        if t is None:
            raise self.error("expected a value")
        if t.kind == "local":
            self.pos += 1
            return self.parser.lookup_local(_strip_sigil(t.text), ty, self.lineno, t.col)
        if t.kind == "global":
            self.pos += 1
            return self.parser.lookup_global(_strip_sigil(t.text), self.lineno, t.col)
        if t.kind == "int":
            self.pos += 1
            if not isinstance(ty, IntType):
                raise ParseError(f"integer literal for non-integer type {ty}", self.lineno, t.col)
            return IntConst(ty, int(t.text))
        if t.text in ("true", "false"):
            self.pos += 1
            return IntConst(I1, 1 if t.text == "true" else 0)
        if t.text == "null":
            self.pos += 1
            if not isinstance(ty, PointerType):
                raise ParseError(f"null for non-pointer type {ty}", self.lineno, t.col)
            return NullConst(ty)
        if t.text == "{":
            return self.parse_range_literal()
        if t.text in ("undef", "poison", "zeroinitializer"):
            raise self.unsupported(t.text)
        if t.text in CONST_EXPR_WORDS:
            raise self.unsupported("constant expression")
        raise self.error(f"expected a value, found {t.text!r}")

    def parse_range_literal(self) -> RangeConst:
        self.expect("{")
        parts = []
        for k in range(3):
            if k:
                self.expect(",")
            ty = self.parse_type()
            if ty != IntType(64):
                raise self.error("range fields must be i64")
            parts.append(int(self.expect_kind("int", "integer").text))
        self.expect("}")
        return RangeConst(*parts)

    def at_range_literal(self) -> bool:
        nxt, val = self.peek(1), self.peek(2)
        return self.at("{") and nxt is not None and nxt.text == "i64" and val is not None and val.kind == "int"

    def parse_typed_value(self) -> Value:
        if self.at_range_literal():
            return self.parse_range_literal()
        ty = self.parse_type()
        self.skip_param_attrs()
        return self.parse_value(ty)

    def parse_label_ref(self) -> BasicBlock:
        self.expect("label")
        t = self.expect_kind("local", "block label")
        return self.parser.block_ref(_strip_sigil(t.text))

    def parse_attr_list(self, stop: tuple[str, ...] = ()) -> list[str]:
        attrs: list[str] = []
        while not self.done() and not (self.peek().text in stop):
            t = self.next()
            if t.kind == "group":
                attrs.extend(self.parser.attr_group(t.text, self.lineno, t.col))
            elif t.kind == "string":
                key = t.text.strip('"')
                if self.accept("="):
                    val = self.expect_kind("string", "attribute value").text.strip('"')
                    attrs.append(f"{key}={val}")
                else:
                    attrs.append(key)
            elif t.kind == "word":
                if t.text in ("section", "gc", "prefix", "prologue", "personality", "comdat"):
                    self.pos -= 1
                    raise self.unsupported(t.text)
                word = t.text
                if self.at("("):
                    depth = 0
                    inner = []
                    while True:
                        x = self.next()
                        depth += x.text == "("
                        depth -= x.text == ")"
                        inner.append(x.text)
                        if depth == 0:
                            break
                    word += "".join(inner)
                attrs.append(word)
            else:
                self.pos -= 1
                raise self.error(f"unexpected token {t.text!r} in attribute list")
        return attrs


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.lines = text.splitlines()
        self.module = QirModule()
        self.module.source_text = text
        self.attr_groups: dict[str, list[str]] = {}
        self.fn_by_name: dict[str, Function] = {}
        self.global_by_name: dict[str, GlobalVariable] = {}
        # Per-function state.
        self.fn: Optional[Function] = None
        self.locals: dict[str, Value] = {}
        self.blocks: dict[str, BasicBlock] = {}
        self.forward: list[_Forward] = []

    # -- symbol tables --------------------------------------------------

    def lookup_local(self, name: str, ty: QirType, line: int, col: int) -> Value:
        v = self.locals.get(name)
        if v is not None:
            return v
        if self.fn is None:
            raise ParseError(f"local %{name} outside a function", line, col)
        fwd = _Forward(ty, name)
        fwd.line, fwd.col = line, col
        self.forward.append(fwd)
        return fwd

    def lookup_global(self, name: str, line: int, col: int) -> Value:
        if name in self.fn_by_name:
            return self.fn_by_name[name]
        if name in self.global_by_name:
            return self.global_by_name[name]
        raise ParseError(f"undefined symbol @{name}", line, col)

    def block_ref(self, name: str) -> BasicBlock:
        b = self.blocks.get(name)
        if b is None:
            b = BasicBlock(name, self.fn)
            self.blocks[name] = b
        return b

    def attr_group(self, ref: str, line: int, col: int) -> list[str]:
        if ref not in self.attr_groups:
            raise ParseError(f"undefined attribute group {ref}", line, col)
        return self.attr_groups[ref]

    # -- driver ---------------------------------------------------------

    def parse(self) -> QirModule:
        items = self._split_top_level()
        # Pass 1: attribute groups and named types.
        for kind, lineno, toks, _ in items:
            if kind == "attributes":
                self._parse_attr_group(_Cursor(toks, lineno, self))
            elif kind == "typedef":
                self._parse_typedef(_Cursor(toks, lineno, self))
        # Pass 2: symbols (function headers, global declarations).
        pending_globals = []
        headers = []
        for kind, lineno, toks, body in items:
            if kind in ("define", "declare"):
                headers.append((self._parse_header(_Cursor(toks, lineno, self), kind == "define"), body))
            elif kind == "global":
                pending_globals.append(self._parse_global_head(_Cursor(toks, lineno, self)))
        # Pass 3: initializers and bodies.
        for gv, cur in pending_globals:
            self._parse_initializer(gv, cur)
        for fn, body in headers:
            if body is not None:
                self._parse_body(fn, body)
        return self.module

    def _split_top_level(self):
        items = []
        i = 0
        n = len(self.lines)
        while i < n:
            lineno = i + 1
            toks = _tokenize(self.lines[i], lineno)
            i += 1
            if not toks:
                continue
            head = toks[0]
            if head.text in ("source_filename", "target"):
                continue
            if head.text == "attributes":
                items.append(("attributes", lineno, toks, None))
            elif head.kind == "local":
                items.append(("typedef", lineno, toks, None))
            elif head.kind == "global":
                items.append(("global", lineno, toks, None))
            elif head.text == "declare":
                items.append(("declare", lineno, toks, None))
            elif head.text == "define":
                if toks[-1].text != "{":
                    raise ParseError("expected '{' at end of function header", lineno, toks[-1].col)
                body = []
                closed = False
                while i < n:
                    text = self.lines[i]
                    if text.strip() == "}":
                        closed = True
                        i += 1
                        break
                    body.append((i + 1, text))
                    i += 1
                if not closed:
                    raise ParseError("unterminated function body", lineno, 1)
                items.append(("define", lineno, toks[:-1], body))
            elif head.text in ("module", "comdat", "$"):
                raise UnsupportedConstruct(head.text, lineno, head.col)
            else:
                raise ParseError(f"unexpected top-level token {head.text!r}", lineno, head.col)
        return items

    # -- top-level items ------------------------------------------------

    def _parse_attr_group(self, cur: _Cursor) -> None:
        cur.expect("attributes")
        ref = cur.expect_kind("group", "attribute group id").text
        cur.expect("=")
        cur.expect("{")
        attrs = cur.parse_attr_list(stop=("}",))
        cur.expect("}")
        cur.expect_end()
        self.attr_groups[ref] = attrs

    def _parse_typedef(self, cur: _Cursor) -> None:
        name = _strip_sigil(cur.next().text)
        cur.expect("=")
        cur.expect("type")
        if cur.accept("opaque"):
            body = None
        else:
            body = cur.parse_type()
        cur.expect_end()
        if name in self.module.type_defs:
            raise ParseError(f"redefinition of type %{name}", cur.lineno, 1)
        self.module.type_defs[name] = body

    def _parse_header(self, cur: _Cursor, is_define: bool) -> Function:
        cur.next()  # define / declare
        linkage = []
        while cur.at_kind("word") and cur.peek().text in LINKAGE_WORDS | CALLING_CONVENTIONS:
            linkage.append(cur.next().text)
        cur.skip_param_attrs()
        ret = cur.parse_type()
        name_tok = cur.expect_kind("global", "function name")
        name = _strip_sigil(name_tok.text)
        cur.expect("(")
        types: list[QirType] = []
        names: list[Optional[str]] = []
        varargs = False
        if not cur.accept(")"):
            while True:
                if cur.accept("..."):
                    varargs = True
                    break
                types.append(cur.parse_type())
                cur.skip_param_attrs()
                if cur.at_kind("local"):
                    names.append(_strip_sigil(cur.next().text))
                else:
                    names.append(None)
                if not cur.accept(","):
                    break
            cur.expect(")")
        if is_define:
            counter = 0
            for k, pn in enumerate(names):
                if pn is None:
                    names[k] = str(counter)
                    counter += 1
        attrs = cur.parse_attr_list()
        if name in self.fn_by_name or name in self.global_by_name:
            raise ParseError(f"redefinition of @{name}", cur.lineno, name_tok.col)
        fn = Function(name, ret, types, names if is_define else None, attrs=attrs,
                      linkage=linkage, varargs=varargs)
        self.fn_by_name[name] = fn
        self.module.functions.append(fn)
        return fn

    def _parse_global_head(self, cur: _Cursor):
        name_tok = cur.next()
        name = _strip_sigil(name_tok.text)
        cur.expect("=")
        linkage = []
        while cur.at_kind("word") and cur.peek().text in LINKAGE_WORDS | {"unnamed_addr", "local_unnamed_addr"}:
            linkage.append(cur.next().text)
        if cur.accept("constant"):
            is_const = True
        elif cur.accept("global"):
            is_const = False
        else:
            raise cur.unsupported("global alias or ifunc")
        vty = cur.parse_type()
        if name in self.global_by_name or name in self.fn_by_name:
            raise ParseError(f"redefinition of @{name}", cur.lineno, name_tok.col)
        gv = GlobalVariable(name, vty, None, linkage, is_const)
        self.global_by_name[name] = gv
        self.module.globals.append(gv)
        return gv, cur

    def _parse_initializer(self, gv: GlobalVariable, cur: _Cursor) -> None:
        gv.initializer = self._parse_const(gv.value_type, cur)
        if cur.accept(","):
            cur.expect("align")
            gv.align = int(cur.expect_kind("int", "alignment").text)
        cur.expect_end()

    def _parse_const(self, ty: QirType, cur: _Cursor):
        t = cur.peek()
        if t is None:
            raise cur.error("expected an initializer")
        if t.kind == "string":
            cur.next()
            if not t.text.startswith("c"):
                raise cur.error("expected c\"...\" string")
            if not isinstance(ty, ArrayType):
                raise cur.error("string initializer for non-array type")
            return StringConst(ty, t.text[2:-1])
        if t.text == "[":
            if not isinstance(ty, ArrayType):
                raise cur.error("array initializer for non-array type")
            cur.next()
            elems = []
            if not cur.accept("]"):
                while True:
                    ety = cur.parse_type()
                    elems.append(self._parse_const(ety, cur))
                    if not cur.accept(","):
                        break
                cur.expect("]")
            return ArrayConst(ty, elems)
        return cur.parse_value(ty)

    # -- function bodies ------------------------------------------------

    def _parse_body(self, fn: Function, body: list[tuple[int, str]]) -> None:
        self.fn = fn
        self.locals = {p.name: p for p in fn.params if p.name is not None}
        self.blocks = {}
        self.forward = []
        current: Optional[BasicBlock] = None
        defined_blocks: list[BasicBlock] = []
        seen_blocks: set[str] = set()
        for lineno, text in body:
            m = _LABEL.match(text)
            if m:
                label = m.group(1).strip('"')
                if label in seen_blocks:
                    raise ParseError(f"redefinition of block {label}", lineno, 1)
                seen_blocks.add(label)
                current = self.block_ref(label)
                current.parent = fn
                defined_blocks.append(current)
                continue
            toks = _tokenize(text, lineno)
            if not toks:
                continue
            if current is None:
                name = "entry"
                current = self.block_ref(name)
                current.parent = fn
                seen_blocks.add(name)
                defined_blocks.append(current)
            inst = self._parse_instruction(_Cursor(toks, lineno, self))
            current.append(inst)
            if inst.name is not None:
                self.locals[inst.name] = inst
        for name, b in self.blocks.items():
            if name not in seen_blocks:
                raise ParseError(f"undefined block label %{name} in @{fn.name}", body[0][0] if body else 0, 1)
        fn.blocks = defined_blocks
        self._resolve_forward(fn)
        fn.renumber()
        self.fn = None

    def _resolve_forward(self, fn: Function) -> None:
        if not self.forward:
            return
        for inst in fn.instructions():
            for k, op in enumerate(inst.operands):
                if isinstance(op, _Forward):
                    real = self.locals.get(op.name)
                    if real is None:
                        raise ParseError(f"use of undefined value %{op.name}", op.line, op.col)
                    if real.type != op.type:
                        raise ParseError(
                            f"%{op.name} defined as {real.type} but used as {op.type}", op.line, op.col)
                    inst.operands[k] = real

    def _parse_instruction(self, cur: _Cursor) -> Instruction:
        name: Optional[str] = None
        if cur.at_kind("local") and cur.peek(1) is not None and cur.peek(1).text == "=":
            name = _strip_sigil(cur.next().text)
            cur.next()
        op_tok = cur.peek()
        if op_tok is None:
            raise cur.error("expected an instruction")
        op = op_tok.text
        if op in UNSUPPORTED_OPCODES:
            raise cur.unsupported(f"instruction '{op}'")
        tail = None
        if op in ("tail", "musttail", "notail"):
            tail = cur.next().text
            op = cur.peek().text if cur.peek() else ""
        if op == "call":
            inst = self._parse_call(cur, name)
            if tail:
                inst.attrs.add(tail)
        elif op == "load":
            cur.next()
            if cur.at("volatile") or cur.at("atomic"):
                raise cur.unsupported(f"{cur.peek().text} load")
            ty = cur.parse_type()
            cur.expect(",")
            ptr = cur.parse_typed_value()
            inst = Instruction("load", [ptr], ty, name, align=self._opt_align(cur))
        elif op == "store":
            cur.next()
            if cur.at("volatile") or cur.at("atomic"):
                raise cur.unsupported(f"{cur.peek().text} store")
            val = cur.parse_typed_value()
            cur.expect(",")
            ptr = cur.parse_typed_value()
            inst = Instruction("store", [val, ptr], VOID, None, align=self._opt_align(cur))
        elif op == "bitcast":
            cur.next()
            val = cur.parse_typed_value()
            cur.expect("to")
            ty = cur.parse_type()
            inst = Instruction("bitcast", [val], ty, name)
        elif op == "br":
            cur.next()
            if cur.at("label"):
                inst = Instruction("br", [], VOID, None, targets=[cur.parse_label_ref()])
            else:
                cond = cur.parse_typed_value()
                cur.expect(",")
                t1 = cur.parse_label_ref()
                cur.expect(",")
                t2 = cur.parse_label_ref()
                inst = Instruction("br", [cond], VOID, None, targets=[t1, t2])
        elif op == "icmp":
            cur.next()
            pred = cur.next().text
            if pred not in ICMP_PREDICATES:
                raise cur.error(f"unknown icmp predicate {pred!r}")
            ty = cur.parse_type()
            a = cur.parse_value(ty)
            cur.expect(",")
            b = cur.parse_value(ty)
            inst = Instruction("icmp", [a, b], I1, name, pred=pred)
        elif op in BINOPS:
            cur.next()
            flags = []
            while cur.at("nuw") or cur.at("nsw"):
                flags.append(cur.next().text)
            ty = cur.parse_type()
            a = cur.parse_value(ty)
            cur.expect(",")
            b = cur.parse_value(ty)
            inst = Instruction(op, [a, b], ty, name, attrs=flags)
        elif op == "phi":
            cur.next()
            ty = cur.parse_type()
            vals, blocks = [], []
            while True:
                cur.expect("[")
                vals.append(cur.parse_value(ty))
                cur.expect(",")
                t = cur.expect_kind("local", "incoming block")
                blocks.append(self.block_ref(_strip_sigil(t.text)))
                cur.expect("]")
                if not cur.accept(","):
                    break
            inst = Instruction("phi", vals, ty, name, incoming=blocks)
        elif op == "ret":
            cur.next()
            if cur.accept("void"):
                inst = Instruction("ret", [], VOID, None)
            else:
                inst = Instruction("ret", [cur.parse_typed_value()], VOID, None)
        elif op == "getelementptr":
            cur.next()
            flags = ["inbounds"] if cur.accept("inbounds") else []
            src = cur.parse_type()
            cur.expect(",")
            ptr = cur.parse_typed_value()
            idx = []
            while cur.accept(","):
                v = cur.parse_typed_value()
                if not isinstance(v, IntConst):
                    raise cur.unsupported("getelementptr with non-constant index")
                idx.append(v)
            try:
                rty = _gep_result(src, idx)
            except ValueError as exc:
                raise cur.error(str(exc)) from None
            inst = Instruction("getelementptr", [ptr, *idx], rty, name, source_type=src, attrs=flags)
        else:
            raise cur.error(f"unknown instruction {op!r}")
        if op not in ("call",):
            cur.expect_end()
        if name is not None and inst.type == VOID:
            raise ParseError(f"instruction '{op}' produces no value but is named %{name}", cur.lineno, 1)
        return inst

    def _opt_align(self, cur: _Cursor) -> Optional[int]:
        if cur.accept(","):
            cur.expect("align")
            return int(cur.expect_kind("int", "alignment").text)
        return None

    def _parse_call(self, cur: _Cursor, name: Optional[str]) -> Instruction:
        cur.expect("call")
        while cur.at_kind("word") and cur.peek().text in CALLING_CONVENTIONS | PARAM_ATTR_WORDS:
            cur.next()
        ty = cur.parse_type()
        sig: Optional[FunctionType] = None
        if isinstance(ty, FunctionType):
            sig = ty
            ret = ty.ret
        else:
            ret = ty
        t = cur.peek()
        if t is None or t.kind != "global":
            if t is not None and t.text == "asm":
                raise cur.unsupported("inline asm")
            raise cur.unsupported("indirect call")
        cur.next()
        callee_name = _strip_sigil(t.text)
        cur.expect("(")
        args: list[Value] = []
        if not cur.accept(")"):
            while True:
                args.append(cur.parse_typed_value())
                if not cur.accept(","):
                    break
            cur.expect(")")
        attrs = cur.parse_attr_list()
        callee = self.fn_by_name.get(callee_name)
        if callee is None:
            if callee_name in self.global_by_name:
                raise ParseError(f"call to non-function @{callee_name}", cur.lineno, t.col)
            params = list(sig.params) if sig is not None else [a.type for a in args]
            callee = Function(callee_name, ret, params, varargs=sig.varargs if sig else False)
            self.fn_by_name[callee_name] = callee
            self.module.functions.append(callee)
        elif callee.ret_type != ret:
            raise ParseError(
                f"call to @{callee_name} with return type {ret}, declared {callee.ret_type}",
                cur.lineno, t.col)
        return Instruction("call", args, ret, name, callee=callee, attrs=attrs)


def _gep_result(src: QirType, indices: list[IntConst]) -> QirType:
    if not indices:
        raise ValueError("getelementptr needs at least one index")
    cur = src
    for idx in indices[1:]:
        if isinstance(cur, StructType):
            if not 0 <= idx.value < len(cur.fields):
                raise ValueError("struct index out of range")
            cur = cur.fields[idx.value]
        elif isinstance(cur, ArrayType):
            cur = cur.element
        else:
            raise ValueError(f"cannot index into {cur}")
    return PointerType(cur)


def parse_module(text: str) -> QirModule:
    """Parse IR text into a module; raises ParseError or UnsupportedConstruct."""
    if text.startswith("﻿"):
        text = text[1:]
    return Parser(text).parse()


def parse_file(path) -> QirModule:
    with open(path, encoding="utf-8") as fh:
        return parse_module(fh.read())
