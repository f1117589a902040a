"""Slice provenance: map every slice back to its allocated qubit array."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from ..dataflow import reverse_postorder
from ..errors import Diagnostic, ZeroStep
from ..ir.model import Function, Instruction, IntConst, RangeConst
from ..ir.names import QUBIT_ALLOC_ARRAY, SLICE, is_call_to


@dataclass
class SliceInfo:
    tag: str  # "array" when sliced from an allocation, "slice" when from another slice
    slice_i: Instruction
    slice_from_i: Instruction
    q_ref: list[int]


def range_to_indices(r: Union[RangeConst, Sequence[int]]) -> list[int]:
    """Indices of the inclusive range ``{start, step, end}``."""
    start, step, end = r.triple if isinstance(r, RangeConst) else r
    if step == 0:
        raise ZeroStep("range step must be non-zero")
    out = []
    k = start
    while (step > 0 and k <= end) or (step < 0 and k >= end):
        out.append(k)
        k += step
    return out


def allocation_size(inst: Instruction) -> Optional[int]:
    """Constant length of a ``qubit_allocate_array`` call, if known."""
    if is_call_to(inst, QUBIT_ALLOC_ARRAY) and isinstance(inst.operands[0], IntConst):
        return inst.operands[0].value
    return None


def find_slice(acc: list[SliceInfo], inst) -> Optional[SliceInfo]:
    for s in acc:
        if s.slice_i is inst:
            return s
    return None


def slice_calculating(i: Instruction, acc: list[SliceInfo],
                      diagnostics: Optional[list] = None) -> list[SliceInfo]:
    """Append provenance for slice call ``i`` to ``acc`` when its parent is known."""
    if not is_call_to(i, SLICE) or len(i.operands) < 2:
        return acc
    parent = i.operands[0]
    rng = i.operands[1]
    if not isinstance(rng, RangeConst):
        _diag(diagnostics, "DynamicRange", "slice range is not a constant", i)
        return acc
    try:
        index_list = range_to_indices(rng)
    except ZeroStep:
        _diag(diagnostics, "ZeroStep", "slice range has a zero step", i)
        return acc
    if isinstance(parent, Instruction) and is_call_to(parent, SLICE):
        src = find_slice(acc, parent)
        if src is None:
            return acc
        bad = [k for k in index_list if not 0 <= k < len(src.q_ref)]
        if bad:
            _diag(diagnostics, "IndexOutOfBounds",
                  f"slice index {bad[0]} outside parent slice of length {len(src.q_ref)}", i)
            return acc
        acc.append(SliceInfo("slice", i, src.slice_from_i, [src.q_ref[k] for k in index_list]))
        return acc
    if isinstance(parent, Instruction) and is_call_to(parent, QUBIT_ALLOC_ARRAY):
        size = allocation_size(parent)
        if size is not None:
            bad = [k for k in index_list if not 0 <= k < size]
            if bad:
                _diag(diagnostics, "IndexOutOfBounds",
                      f"slice index {bad[0]} outside allocation of length {size}", i)
                return acc
        acc.append(SliceInfo("array", i, parent, index_list))
    return acc


def compute_slices(f: Function, diagnostics: Optional[list] = None) -> list[SliceInfo]:
    """Run slice_calculating over ``f`` in an order where parents come first."""
    acc: list[SliceInfo] = []
    for block in reverse_postorder(f):
        for inst in block.instructions:
            if inst.opcode == "call":
                slice_calculating(inst, acc, diagnostics)
    return acc


def _diag(diagnostics, code, message, inst):
    if diagnostics is not None:
        fn = inst.function.name if inst.function is not None else None
        diagnostics.append(Diagnostic(code, message, fn, inst.name and f"%{inst.name}"))
