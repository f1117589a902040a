"""Type system for the QIR subset.

Types are immutable and compare structurally, so ``PointerType(QUBIT)``
built in two places is the same type.
"""

from __future__ import annotations

from dataclasses import dataclass


class QirType:
    def pointer(self) -> "PointerType":
        return PointerType(self)


@dataclass(frozen=True)
class VoidType(QirType):
    def __str__(self) -> str:
        return "void"


@dataclass(frozen=True)
class IntType(QirType):
    width: int

    def __str__(self) -> str:
        return f"i{self.width}"


@dataclass(frozen=True)
class NamedType(QirType):
    """A named (usually opaque) type such as ``%Qubit`` or ``%Range``."""

    name: str

    def __str__(self) -> str:
        return f"%{self.name}"


@dataclass(frozen=True)
class PointerType(QirType):
    pointee: QirType

    def __str__(self) -> str:
        return f"{self.pointee}*"

    @property
    def depth(self) -> int:
        d, t = 1, self.pointee
        while isinstance(t, PointerType):
            d += 1
            t = t.pointee
        return d


@dataclass(frozen=True)
class StructType(QirType):
    fields: tuple[QirType, ...]

    def __str__(self) -> str:
        if not self.fields:
            return "{}"
        return "{ " + ", ".join(str(f) for f in self.fields) + " }"


@dataclass(frozen=True)
class ArrayType(QirType):
    count: int
    element: QirType

    def __str__(self) -> str:
        return f"[{self.count} x {self.element}]"


@dataclass(frozen=True)
class FunctionType(QirType):
    ret: QirType
    params: tuple[QirType, ...]
    varargs: bool = False

    def __str__(self) -> str:
        params = [str(p) for p in self.params]
        if self.varargs:
            params.append("...")
        return f"{self.ret} ({', '.join(params)})"


VOID = VoidType()
I1 = IntType(1)
I8 = IntType(8)
I32 = IntType(32)
I64 = IntType(64)
QUBIT = NamedType("Qubit")
ARRAY = NamedType("Array")
RESULT = NamedType("Result")
TUPLE = NamedType("Tuple")
CALLABLE = NamedType("Callable")
RANGE = NamedType("Range")
STRING = NamedType("String")
QUBIT_PTR = PointerType(QUBIT)
QUBIT_PTR_PTR = PointerType(QUBIT_PTR)
ARRAY_PTR = PointerType(ARRAY)
TUPLE_PTR = PointerType(TUPLE)
CALLABLE_PTR = PointerType(CALLABLE)
RESULT_PTR = PointerType(RESULT)
I8_PTR = PointerType(I8)

ALLOWED_INT_WIDTHS = frozenset({1, 8, 32, 64})
OPAQUE_NAMES = ("Qubit", "Array", "Callable", "Result", "String", "Tuple", "BigInt")


def is_qubit_ptr(t: QirType) -> bool:
    return t == QUBIT_PTR


def is_pointer(t: QirType) -> bool:
    return isinstance(t, PointerType)
