"""Dataflow-based rewrites of QIR idioms: slices, loads, creates, DCE."""

from .creates import (
    CreateOpGroup,
    CreateResult,
    UnsafeEscape,
    collect_create_ops,
    mmo,
    mmo_plan,
    qdfo_create,
    qdfo_create_ex,
)
from .dce import DEFAULT_DCE_KEYWORDS, DceKeywordList, qir_dce, qir_dce_removal_set
from .loads import DEFAULT_MAX_QUBITS, LoadOpDesc, collect_load_ops, qdfo_load
from .slices import SliceInfo, compute_slices, find_slice, range_to_indices, slice_calculating

__all__ = [
    "CreateOpGroup", "CreateResult", "UnsafeEscape", "collect_create_ops", "mmo", "mmo_plan",
    "qdfo_create", "qdfo_create_ex", "DEFAULT_DCE_KEYWORDS", "DceKeywordList", "qir_dce",
    "qir_dce_removal_set", "DEFAULT_MAX_QUBITS", "LoadOpDesc", "collect_load_ops", "qdfo_load",
    "SliceInfo", "compute_slices", "find_slice", "range_to_indices", "slice_calculating",
]
