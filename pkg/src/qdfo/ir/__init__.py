"""QIR data model, parser, printer and validator."""

from .model import (
    Argument,
    BasicBlock,
    Function,
    GlobalVariable,
    Instruction,
    IntConst,
    NullConst,
    QirModule,
    RangeConst,
    Value,
)
from .parser import parse_file, parse_module
from .printer import print_module
from .validate import validate

__all__ = [
    "Argument",
    "BasicBlock",
    "Function",
    "GlobalVariable",
    "Instruction",
    "IntConst",
    "NullConst",
    "QirModule",
    "RangeConst",
    "Value",
    "parse_file",
    "parse_module",
    "print_module",
    "validate",
]
