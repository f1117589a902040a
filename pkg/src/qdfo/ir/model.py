"""In-memory IR: values, instructions, blocks, functions, modules.

Every value compares by identity. Constants are immutable and may be
shared between use sites.
"""

from __future__ import annotations

import re
from typing import Iterable, Iterator, Optional

from .types import (
    I1,
    I64,
    RANGE,
    VOID,
    ArrayType,
    FunctionType,
    PointerType,
    QirType,
)

TERMINATORS = frozenset({"br", "ret"})
BINOPS = frozenset({"add", "sub", "mul"})
PURE_OPCODES = frozenset({"load", "bitcast", "icmp", "add", "sub", "mul", "phi", "getelementptr"})
ICMP_PREDICATES = ("eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge")


class Value:
    __slots__ = ("type", "name", "__weakref__")

    def __init__(self, type: QirType, name: Optional[str] = None):
        self.type = type
        self.name = name

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name!r}: {self.type}>"


class Constant(Value):
    __slots__ = ()


class IntConst(Constant):
    __slots__ = ("value",)

    def __init__(self, type: QirType, value: int):
        super().__init__(type)
        self.value = int(value)

    def __repr__(self) -> str:
        return f"<IntConst {self.type} {self.value}>"


class NullConst(Constant):
    __slots__ = ()

    def __repr__(self) -> str:
        return f"<NullConst {self.type}>"


class RangeConst(Constant):
    """Inclusive arithmetic progression ``{start, step, end}``."""

    __slots__ = ("start", "step", "end")

    def __init__(self, start: int, step: int, end: int):
        super().__init__(RANGE)
        self.start, self.step, self.end = int(start), int(step), int(end)

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.start, self.step, self.end)

    def __repr__(self) -> str:
        return f"<RangeConst {self.triple}>"


class ArrayConst(Constant):
    __slots__ = ("elements",)

    def __init__(self, type: ArrayType, elements: list[Value]):
        super().__init__(type)
        self.elements = list(elements)


class StringConst(Constant):
    """A ``c"..."`` initializer, kept as the raw escaped text."""

    __slots__ = ("raw",)

    def __init__(self, type: ArrayType, raw: str):
        super().__init__(type)
        self.raw = raw


def const_int(v: Value) -> Optional[int]:
    return v.value if isinstance(v, IntConst) else None


def i64(value: int) -> IntConst:
    return IntConst(I64, value)


def i1(value: bool) -> IntConst:
    return IntConst(I1, 1 if value else 0)


class Argument(Value):
    __slots__ = ("function", "index")

    def __init__(self, type: QirType, name: Optional[str], function: "Function", index: int):
        super().__init__(type, name)
        self.function = function
        self.index = index


class GlobalVariable(Value):
    """A module-level ``@name = ... constant/global`` definition.

    ``type`` is the pointer type of the symbol; ``value_type`` the type of
    the initializer.
    """

    __slots__ = ("value_type", "initializer", "linkage", "is_constant", "align")

    def __init__(self, name: str, value_type: QirType, initializer: Optional[Constant],
                 linkage: Iterable[str] = (), is_constant: bool = True, align: Optional[int] = None):
        super().__init__(PointerType(value_type), name)
        self.value_type = value_type
        self.initializer = initializer
        self.linkage = list(linkage)
        self.is_constant = is_constant
        self.align = align

    @property
    def is_internal(self) -> bool:
        return "internal" in self.linkage or "private" in self.linkage


class Instruction(Value):
    """One IR instruction.

    Opcode-specific data lives in plain attributes: ``callee`` (call),
    ``pred`` (icmp), ``targets`` (br), ``incoming`` (phi blocks, parallel to
    ``operands``) and ``source_type`` (getelementptr). For opcodes without a
    result ``type`` is void and ``name`` is None.
    """

    __slots__ = ("opcode", "operands", "parent", "ordinal", "attrs", "align",
                 "callee", "pred", "targets", "incoming", "source_type")

    def __init__(self, opcode: str, operands: Iterable[Value] = (), type: QirType = VOID,
                 name: Optional[str] = None, *, callee: Optional["Function"] = None,
                 pred: Optional[str] = None, targets: Iterable["BasicBlock"] = (),
                 incoming: Iterable["BasicBlock"] = (), source_type: Optional[QirType] = None,
                 attrs: Iterable[str] = (), align: Optional[int] = None):
        super().__init__(type, name)
        self.opcode = opcode
        self.operands: list[Value] = list(operands)
        self.parent: Optional[BasicBlock] = None
        self.ordinal = -1
        self.attrs = set(attrs)
        self.align = align
        self.callee = callee
        self.pred = pred
        self.targets: list[BasicBlock] = list(targets)
        self.incoming: list[BasicBlock] = list(incoming)
        self.source_type = source_type

    @property
    def has_result(self) -> bool:
        return self.name is not None

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def is_pure(self) -> bool:
        return self.opcode in PURE_OPCODES

    @property
    def function(self) -> Optional["Function"]:
        return self.parent.parent if self.parent is not None else None

    @property
    def callee_name(self) -> Optional[str]:
        return self.callee.name if self.callee is not None else None

    def phi_pairs(self) -> list[tuple[Value, "BasicBlock"]]:
        return list(zip(self.operands, self.incoming))

    def __repr__(self) -> str:
        head = f"%{self.name} = " if self.name else ""
        extra = f" @{self.callee.name}" if self.callee is not None else ""
        return f"<Instruction {head}{self.opcode}{extra}>"


class BasicBlock:
    __slots__ = ("name", "instructions", "parent")

    def __init__(self, name: str, parent: Optional["Function"] = None):
        self.name = name
        self.instructions: list[Instruction] = []
        self.parent = parent

    def append(self, inst: Instruction) -> Instruction:
        inst.parent = self
        inst.ordinal = len(self.instructions)
        self.instructions.append(inst)
        return inst

    def set_instructions(self, insts: list[Instruction]) -> None:
        self.instructions = insts
        for i, inst in enumerate(insts):
            inst.parent = self
            inst.ordinal = i

    @property
    def terminator(self) -> Optional[Instruction]:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None

    @property
    def successors(self) -> list["BasicBlock"]:
        term = self.terminator
        if term is None or term.opcode != "br":
            return []
        out: list[BasicBlock] = []
        for t in term.targets:
            if t not in out:
                out.append(t)
        return out

    def phis(self) -> list[Instruction]:
        out = []
        for inst in self.instructions:
            if inst.opcode != "phi":
                break
            out.append(inst)
        return out

    def __repr__(self) -> str:
        return f"<BasicBlock {self.name} ({len(self.instructions)} insts)>"


_NUMERIC = re.compile(r"^\d+$")


class Function(Value):
    __slots__ = ("ret_type", "params", "blocks", "attrs", "linkage", "param_types",
                 "varargs", "_names", "_next_numeric", "_suffix_counters")

    def __init__(self, name: str, ret_type: QirType, param_types: Iterable[QirType],
                 param_names: Optional[Iterable[Optional[str]]] = None,
                 attrs: Iterable[str] = (), linkage: Iterable[str] = (), varargs: bool = False):
        self.param_types = list(param_types)
        self.ret_type = ret_type
        self.varargs = varargs
        super().__init__(PointerType(FunctionType(ret_type, tuple(self.param_types), varargs)), name)
        names = list(param_names) if param_names is not None else [None] * len(self.param_types)
        self.params = [Argument(t, n, self, i) for i, (t, n) in enumerate(zip(self.param_types, names))]
        self.blocks: list[BasicBlock] = []
        self.attrs = set(attrs)
        self.linkage = list(linkage)
        self._names: Optional[set[str]] = None
        self._next_numeric = 0
        self._suffix_counters: dict[str, int] = {}

    @property
    def is_declaration(self) -> bool:
        return not self.blocks

    @property
    def is_internal(self) -> bool:
        return "internal" in self.linkage or "private" in self.linkage

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def add_block(self, name: str, after: Optional[BasicBlock] = None) -> BasicBlock:
        block = BasicBlock(name, self)
        if after is None:
            self.blocks.append(block)
        else:
            self.blocks.insert(self.blocks.index(after) + 1, block)
        return block

    def instructions(self) -> Iterator[Instruction]:
        for block in self.blocks:
            yield from block.instructions

    def instruction_count(self) -> int:
        return sum(len(b.instructions) for b in self.blocks)

    def renumber(self) -> None:
        for block in self.blocks:
            block.parent = self
            for i, inst in enumerate(block.instructions):
                inst.parent = block
                inst.ordinal = i

    def predecessors(self) -> dict[BasicBlock, list[BasicBlock]]:
        preds: dict[BasicBlock, list[BasicBlock]] = {b: [] for b in self.blocks}
        for block in self.blocks:
            for succ in block.successors:
                preds.setdefault(succ, []).append(block)
        return preds

    def remove_instructions(self, doomed: set[Instruction]) -> int:
        """Erase a batch of instructions; returns how many were erased."""
        if not doomed:
            return 0
        removed = 0
        for block in self.blocks:
            kept = [i for i in block.instructions if i not in doomed]
            removed += len(block.instructions) - len(kept)
            if removed and len(kept) != len(block.instructions):
                block.set_instructions(kept)
        for inst in doomed:
            inst.parent = None
        return removed

    # -- naming ---------------------------------------------------------

    def _load_names(self) -> set[str]:
        if self._names is None:
            names = {p.name for p in self.params if p.name is not None}
            names.update(i.name for i in self.instructions() if i.name is not None)
            names.update(b.name for b in self.blocks)
            self._names = names
            nums = [int(n) for n in names if _NUMERIC.match(n)]
            self._next_numeric = max(nums, default=-1) + 1
        return self._names

    def unique_name(self, base: str, suffix: str = ".i") -> str:
        """A function-unique local name derived from ``base``.

        Textual names get LLVM-style suffixes (``x.i``, ``x.i1``, ...);
        numeric names get the next free number.
        """
        names = self._load_names()
        if _NUMERIC.match(base) or not base:
            while str(self._next_numeric) in names:
                self._next_numeric += 1
            name = str(self._next_numeric)
            self._next_numeric += 1
        else:
            stem = base + suffix
            k = self._suffix_counters.get(stem, 1 if suffix.endswith(".") else 0)
            name = stem if k == 0 else f"{stem}{k}"
            while name in names:
                k += 1
                name = f"{stem}{k}"
            self._suffix_counters[stem] = k + 1
        names.add(name)
        return name

    def reserve_name(self, name: str) -> bool:
        names = self._load_names()
        if name in names:
            return False
        names.add(name)
        return True

    def __repr__(self) -> str:
        kind = "declare" if self.is_declaration else "define"
        return f"<Function {kind} @{self.name}>"


class QirModule:
    def __init__(self):
        self.type_defs: dict[str, Optional[QirType]] = {}
        self.globals: list[GlobalVariable] = []
        self.functions: list[Function] = []
        self.source_text: Optional[str] = None

    def get_function(self, name: str) -> Optional[Function]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def get_global(self, name: str) -> Optional[GlobalVariable]:
        for g in self.globals:
            if g.name == name:
                return g
        return None

    def defined_functions(self) -> list[Function]:
        return [f for f in self.functions if not f.is_declaration]

    def instruction_count(self) -> int:
        return sum(f.instruction_count() for f in self.functions)

    def entry_points(self) -> list[Function]:
        marked = [f for f in self.defined_functions() if "EntryPoint" in f.attrs]
        if marked:
            return marked
        called: set[str] = set()
        for f in self.defined_functions():
            for inst in f.instructions():
                if inst.callee is not None and inst.callee is not f:
                    called.add(inst.callee.name)
        return [f for f in self.defined_functions() if f.name not in called and not f.params]

    def replace_contents(self, other: "QirModule") -> None:
        self.type_defs = other.type_defs
        self.globals = other.globals
        self.functions = other.functions
        self.source_text = other.source_text

    def clone(self) -> "QirModule":
        from .parser import parse_module
        from .printer import print_module

        return parse_module(print_module(self))

    def __repr__(self) -> str:
        return f"<QirModule {len(self.globals)} globals, {len(self.functions)} functions>"
