"""Callee-name canonicalization.

Real compiler output spells runtime functions ``__quantum__rt__array_create_1d``
and intrinsics ``__quantum__qis__x__ctl``; hand-written listings often drop
the prefix. Both spellings map to the same canonical name.
"""

from __future__ import annotations

from typing import Optional

RT_PREFIX = "__quantum__rt__"
QIS_PREFIX = "__quantum__qis__"

GEP = "array_get_element_ptr_1d"
GET_SIZE = "array_get_size_1d"
SLICE = "array_slice_1d"
ARRAY_CREATE = "array_create_1d"
ARRAY_COPY = "array_copy"
ARRAY_CONCAT = "array_concatenate"
ALIAS = "array_update_alias_count"
REFERENCE = "array_update_reference_count"
QUBIT_ALLOC_ARRAY = "qubit_allocate_array"
QUBIT_RELEASE_ARRAY = "qubit_release_array"
QUBIT_ALLOC = "qubit_allocate"
QUBIT_RELEASE = "qubit_release"
CALLABLE_CREATE = "callable_create"
CALLABLE_INVOKE = "callable_invoke"
MAKE_ADJOINT = "callable_make_adjoint"
MAKE_CONTROLLED = "callable_make_controlled"
TUPLE_CREATE = "tuple_create"

MANAGEMENT_PREFIXES = (
    ALIAS,
    REFERENCE,
    "tuple_update_",
    "capture_update_",
    "callable_update_",
)

# Calls on an array that never change which qubit sits in which slot.
ARRAY_READ_ONLY = frozenset({GEP, GET_SIZE, SLICE, ALIAS, REFERENCE})


# Alternate spellings seen in hand-written listings.
SPELLING_ALIASES = {"qubit_array_allocate": QUBIT_ALLOC_ARRAY}


def canonical(name: Optional[str]) -> str:
    if not name:
        return ""
    if name.startswith(RT_PREFIX):
        name = name[len(RT_PREFIX):]
    elif name.startswith(QIS_PREFIX):
        return "qis__" + name[len(QIS_PREFIX):]
    elif name.startswith("rt__"):
        name = name[4:]
    return SPELLING_ALIASES.get(name, name)


def callee_canonical(inst) -> str:
    callee = getattr(inst, "callee", None)
    return canonical(callee.name) if callee is not None else ""


def is_call_to(inst, canon: str) -> bool:
    return inst.opcode == "call" and callee_canonical(inst) == canon


def is_gate(canon: str) -> bool:
    return canon.startswith("qis__")


def is_management(canon: str) -> bool:
    return canon.startswith(MANAGEMENT_PREFIXES)


def gate_variant(canon: str) -> str:
    """``body``, ``adj``, ``ctl`` or ``ctladj`` for a ``qis__`` name."""
    for suffix in ("__ctladj", "__ctl", "__adj", "__body"):
        if canon.endswith(suffix):
            return suffix[2:]
    return "body"


def spelled_like(reference_name: str, canon: str) -> str:
    """Spell ``canon`` using the same prefix convention as ``reference_name``."""
    if reference_name.startswith(RT_PREFIX) or reference_name.startswith(QIS_PREFIX):
        if canon.startswith("qis__"):
            return QIS_PREFIX + canon[5:]
        return RT_PREFIX + canon
    return canon
