"""Dead-call elimination for side-effect-free runtime functions.

A generic optimizer must keep every call, because it cannot see into the
runtime. Some runtime calls only compute a value (an element pointer, a
slice, a size, a fresh tuple or callable). When that value ends up unused,
or used only by bitcasts and reference-count bookkeeping, the whole cluster
can go.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..dataflow import DefUse
from ..errors import Diagnostic
from ..ir.model import Function, Instruction
from ..ir.names import callee_canonical, is_management
from ..ir.types import VOID

log = logging.getLogger(__name__)

DEFAULT_DCE_KEYWORDS = ("get_element_ptr", "array_slice", "array_get_size", "callable_create", "tuple_create")

KNOWN_RUNTIME_NAMES = (
    "array_get_element_ptr_1d", "array_slice_1d", "array_get_size_1d", "callable_create",
    "tuple_create", "array_create_1d", "array_copy", "array_concatenate", "callable_copy",
    "tuple_copy", "result_get_zero", "result_get_one", "result_equal", "string_create",
)


@dataclass
class DceKeywordList:
    keywords: list[str] = field(default_factory=lambda: list(DEFAULT_DCE_KEYWORDS))

    def __post_init__(self):
        self.keywords = [k.strip() for k in self.keywords if k and k.strip()]
        if not self.keywords:
            raise ValueError("the DCE keyword list must not be empty")

    def warnings(self) -> list[str]:
        return [f"keyword {k!r} matches no known runtime function" for k in self.keywords
                if not any(k in name for name in KNOWN_RUNTIME_NAMES)]

    def matches(self, canon: str) -> bool:
        return not canon.startswith("qis__") and any(k in canon for k in self.keywords)

    @classmethod
    def parse(cls, text: str) -> "DceKeywordList":
        return cls([k for k in text.split(",")])


def _as_list(kw) -> DceKeywordList:
    if kw is None:
        return DceKeywordList()
    if isinstance(kw, DceKeywordList):
        return kw
    return DceKeywordList(list(kw))


FRESH_OBJECTS = ("tuple_create", "callable_create")


def _closure(inst: Instruction, du: DefUse, doomed: set) -> Optional[set[Instruction]]:
    """Instructions that die with ``inst``, or None if some use keeps it alive.

    Writes into a fresh tuple nobody reads are dead too.
    """
    fresh = callee_canonical(inst) in FRESH_OBJECTS
    out = {inst}
    work = [inst]
    while work:
        v = work.pop()
        for user in du.users(v):
            if user in out or user in doomed:
                continue
            if user.opcode == "bitcast":
                out.add(user)
                work.append(user)
            elif user.opcode == "call" and is_management(callee_canonical(user)) and user.operands[0] is v \
                    and not any(op is v for op in user.operands[1:]):
                out.add(user)
            elif fresh and user.opcode == "getelementptr" and user.operands[0] is v:
                out.add(user)
                work.append(user)
            elif fresh and user.opcode == "store" and user.operands[1] is v and user.operands[0] is not v:
                out.add(user)
            else:
                return None
    return out


def qir_dce_removal_set(f: Function, kw=None) -> set[Instruction]:
    kws = _as_list(kw)
    du = DefUse(f)
    doomed: set[Instruction] = set()
    changed = True
    while changed:
        changed = False
        for inst in f.instructions():
            if inst in doomed or inst.opcode != "call" or inst.type == VOID:
                continue
            if not kws.matches(callee_canonical(inst)):
                continue
            dead = _closure(inst, du, doomed)
            if dead is not None:
                doomed |= dead
                changed = True
    return doomed


def qir_dce(f: Function, kw=None, diagnostics: Optional[list] = None) -> int:
    """Remove keyword-matched runtime calls whose results are effectively unused."""
    doomed = qir_dce_removal_set(f, kw)
    return f.remove_instructions(doomed)
