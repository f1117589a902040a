"""Control-array construction: recognition, merging and refcount cleanup."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..dataflow import DefUse, DominatorInfo, reverse_postorder
from ..errors import Diagnostic
from ..ir.model import Function, Instruction, IntConst, Value
from ..ir.names import (
    ALIAS,
    ARRAY_CREATE,
    GEP,
    REFERENCE,
    callee_canonical,
    is_call_to,
    is_gate,
)
from ..ir.types import QUBIT_PTR, QUBIT_PTR_PTR


class UnsafeEscape(Exception):
    def __init__(self, message: str, use: Optional[Instruction] = None):
        self.use = use
        super().__init__(message)


@dataclass(eq=False)
class CreateOpGroup:
    create_call: Instruction
    length: int
    stores: list[tuple[Instruction, Instruction, Instruction]] = field(default_factory=list)
    stored_qubits: list[Value] = field(default_factory=list)

    @property
    def qubit_set(self) -> frozenset:
        return frozenset(self.stored_qubits)

    @property
    def has_duplicates(self) -> bool:
        return len(self.qubit_set) != len(self.stored_qubits)

    def instructions(self) -> list[Instruction]:
        out = [self.create_call]
        for triple in self.stores:
            out.extend(triple)
        return out


def collect_create_ops(f: Function, diagnostics: Optional[list] = None,
                       du: Optional[DefUse] = None) -> list[CreateOpGroup]:
    """Complete control-qubit array constructions in ``f`` (the CQ list)."""
    du = du or DefUse(f)
    groups: list[CreateOpGroup] = []
    for inst in f.instructions():
        if not is_call_to(inst, ARRAY_CREATE) or len(inst.operands) != 2:
            continue
        n = inst.operands[1]
        if not isinstance(n, IntConst):
            _diag(diagnostics, "DynamicLength", "array created with a non-constant length", f, inst)
            continue
        slots: dict[int, tuple] = {}
        ok = True
        for gep in du.users(inst):
            if not is_call_to(gep, GEP) or gep.operands[0] is not inst:
                continue
            idx = gep.operands[1]
            triples = []
            for bc in du.users(gep):
                if bc.opcode != "bitcast" or bc.type != QUBIT_PTR_PTR:
                    ok = False
                    break
                for st in du.users(bc):
                    if st.opcode == "store" and st.operands[1] is bc and st.operands[0].type == QUBIT_PTR:
                        triples.append((gep, bc, st))
                    else:
                        ok = False
            if not ok:
                break
            if not isinstance(idx, IntConst) or len(triples) != 1 or idx.value in slots:
                ok = False
                break
            slots[idx.value] = triples[0]
        if not ok or sorted(slots) != list(range(n.value)):
            _diag(diagnostics, "PartialCreate", "array construction is not a complete control-qubit array", f, inst)
            continue
        g = CreateOpGroup(inst, n.value)
        for k in range(n.value):
            g.stores.append(slots[k])
            g.stored_qubits.append(slots[k][2].operands[0])
        groups.append(g)
    return groups


def _classify(user: Instruction, arrays: tuple) -> str:
    if user.opcode != "call":
        return "other"
    name = callee_canonical(user)
    if is_gate(name):
        return "gate"
    if name in (ALIAS, REFERENCE) and any(user.operands[0] is a for a in arrays) and len(user.operands) == 2:
        if not isinstance(user.operands[1], IntConst):
            return "other"
        return "alias" if name == ALIAS else "ref"
    return "other"


def _entries(users: list[Instruction], arrays: tuple) -> list[tuple]:
    """(ordinal, kind, delta, user) for each use; raises UnsafeEscape on foreign uses."""
    out = []
    for u in users:
        kind = _classify(u, arrays)
        if kind == "other":
            raise UnsafeEscape(f"control array reaches {u.opcode} {callee_canonical(u) or ''}".strip(), u)
        out.append((u.ordinal, kind, 0 if kind == "gate" else u.operands[1].value, u))
    return out


class _UseLedger:
    """One array's use entries with running count sums.

    Lets a merge be checked in constant time when the merged array's uses
    all come after the ones already recorded.
    """

    def __init__(self, entries: list[tuple]):
        self.entries: list[tuple] = []
        self.alias = [0]  # alias[k]: net alias delta over entries[:k]
        self.ref = [0]
        self.gates: list[int] = []
        self.extend(entries)

    def extend(self, entries: list[tuple]) -> None:
        for e in entries:
            if e[1] == "gate":
                self.gates.append(len(self.entries))
            self.alias.append(self.alias[-1] + (e[2] if e[1] == "alias" else 0))
            self.ref.append(self.ref[-1] + (e[2] if e[1] == "ref" else 0))
            self.entries.append(e)

    def truncate(self, n: int) -> None:
        del self.entries[n:], self.alias[n + 1:], self.ref[n + 1:]
        while self.gates and self.gates[-1] >= n:
            self.gates.pop()

    def check(self, merged: Optional[int]) -> None:
        if not self.gates:
            return
        first, last = self.gates[0], self.gates[-1]
        for k in range(first):
            if self.entries[k][1] == "ref" and self.entries[k][2] < 0:
                raise UnsafeEscape("reference released before the first gate use", self.entries[k][3])
        lo = min(first + 1, last)
        alias_net = self.alias[last] - self.alias[lo]
        ref_net = self.ref[last] - self.ref[lo]
        if alias_net != 0:
            raise UnsafeEscape(f"alias updates between gate uses net to {alias_net}")
        if merged is not None:
            if ref_net != -merged:
                raise UnsafeEscape(f"reference updates between gate uses net to {ref_net}, expected {-merged}")
        elif not -(len(self.gates) - 1) <= ref_net <= 0:
            raise UnsafeEscape(f"reference updates between gate uses net to {ref_net}")

    def between(self) -> list[Instruction]:
        if not self.gates:
            return []
        first, last = self.gates[0], self.gates[-1]
        return [e[3] for e in self.entries[first + 1:last] if e[1] != "gate"]


def _plan(entries: list[tuple], merged: Optional[int]) -> list[Instruction]:
    ledger = _UseLedger(entries)
    ledger.check(merged)
    return ledger.between()


def mmo_plan(array, users: list[Instruction], merged: Optional[int] = None) -> list[Instruction]:
    """Management calls to drop between the first and last gate use of ``array``.

    ``users`` are the array's users other than its own slot stores, in
    program order. Raises UnsafeEscape when the array reaches anything other
    than gates and count updates, or when the in-between counts do not net
    out as a merge would leave them. ``array`` may be a tuple of values that
    are about to become one.
    """
    arrays = array if isinstance(array, tuple) else (array,)
    return _plan(_entries(users, arrays), merged)


def _array_users(group: CreateOpGroup, du: DefUse, doomed: set) -> list[Instruction]:
    own = {t[0] for t in group.stores}
    users = [u for u in du.users(group.create_call) if u not in own and u not in doomed]
    return users


def _in_block_order(users: list[Instruction], block) -> Optional[list[Instruction]]:
    if any(u.parent is not block for u in users):
        return None
    return sorted(users, key=lambda u: u.ordinal)


def mmo(f: Function, group: CreateOpGroup, merged: Optional[int] = None,
        diagnostics: Optional[list] = None) -> int:
    """Remove the refcount updates strictly between the first and last gate use."""
    du = DefUse(f)
    users = _in_block_order(_array_users(group, du, set()), group.create_call.parent)
    if users is None:
        _diag(diagnostics, "UnsafeEscape", "control array used outside its block", f, group.create_call)
        return 0
    try:
        doomed = mmo_plan(group.create_call, users, merged)
    except UnsafeEscape as exc:
        _diag(diagnostics, "UnsafeEscape", str(exc), f, group.create_call)
        return 0
    return f.remove_instructions(set(doomed))


@dataclass
class CreateResult:
    merges: int = 0
    mmo_removed: int = 0


def qdfo_create_ex(f: Function, cq: list[CreateOpGroup], *, run_mmo: bool = True,
                   diagnostics: Optional[list] = None) -> CreateResult:
    res = CreateResult()
    if not cq:
        return res
    du = DefUse(f)
    dom = DominatorInfo(f)
    order = {b: i for i, b in enumerate(reverse_postorder(f))}
    cq = sorted(cq, key=lambda g: (order.get(g.create_call.parent, 1 << 30), g.create_call.ordinal))
    reps: dict[tuple, CreateOpGroup] = {}
    merged_into: dict[CreateOpGroup, int] = {}
    doomed: set[Instruction] = set()
    ledgers: dict[CreateOpGroup, _UseLedger] = {}
    for g in cq:
        if g.has_duplicates:
            _diag(diagnostics, "DuplicateStoredQubit", "control array stores a qubit twice; not merged", f,
                  g.create_call)
            continue
        key = (g.create_call.parent, g.length, g.qubit_set)
        rep = reps.get(key)
        if rep is None:
            reps[key] = g
            merged_into[g] = 0
            continue
        foreign = _array_users(g, du, doomed)
        if not all(dom.inst_dominates(rep.create_call, u) for u in foreign):
            _diag(diagnostics, "DominanceViolation", "earlier array does not dominate later uses", f, g.create_call)
            continue
        if run_mmo:
            block = rep.create_call.parent
            if any(u.parent is not block for u in foreign):
                _diag(diagnostics, "UnsafeEscape", "control array used outside its block; not merged", f,
                      g.create_call)
                continue
            try:
                ledger = ledgers.get(rep)
                if ledger is None:
                    own = _in_block_order(_array_users(rep, du, doomed), block)
                    if own is None:
                        raise UnsafeEscape("control array used outside its block")
                    ledger = ledgers[rep] = _UseLedger(_entries(own, (rep.create_call,)))
                extra = _entries(sorted(foreign, key=lambda u: u.ordinal), (g.create_call,))
                n = len(ledger.entries)
                if extra and ledger.entries and extra[0][0] < ledger.entries[-1][0]:
                    trial = _UseLedger(sorted(ledger.entries + extra, key=lambda e: e[0]))
                    trial.check(merged_into[rep] + 1)
                    ledgers[rep] = trial
                else:
                    ledger.extend(extra)
                    try:
                        ledger.check(merged_into[rep] + 1)
                    except UnsafeEscape:
                        ledger.truncate(n)
                        raise
            except UnsafeEscape as exc:
                _diag(diagnostics, "UnsafeEscape", f"{exc}; not merged", f, g.create_call)
                continue
        du.replace(g.create_call, rep.create_call)
        doomed.update(g.instructions())
        merged_into[rep] += 1
        res.merges += 1
    if doomed:
        f.remove_instructions(doomed)
    if run_mmo:
        for rep, m in merged_into.items():
            if m:
                res.mmo_removed += mmo(f, rep, m, diagnostics)
    f.renumber()
    return res


def qdfo_create(f: Function, cq: list[CreateOpGroup], *, run_mmo: bool = True,
                diagnostics: Optional[list] = None) -> int:
    """Merge control arrays holding the same qubits; returns the number merged."""
    return qdfo_create_ex(f, cq, run_mmo=run_mmo, diagnostics=diagnostics).merges


def _diag(diagnostics, code, message, f, inst):
    if diagnostics is not None:
        diagnostics.append(Diagnostic(code, message, f.name, f"%{inst.name}" if inst.name else inst.opcode))
