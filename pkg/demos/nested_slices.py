"""
Seeing through nested slices
============================

A slice is a view onto its parent array. Once every slice reachable from an
allocation is resolved to positions in the register, two loads through
different views can be recognized as the same qubit.
"""

from qdfo.core import collect_load_ops, compute_slices, qdfo_load
from qdfo.ir import parse_module
from qdfo.oracle import interpret, trace_equal

text = """
%Qubit = type opaque
%Array = type opaque
%Range = type { i64, i64, i64 }

define void @main() #0 {
entry:
  %qs = call %Array* @qubit_allocate_array(i64 5)
  %rev = call %Array* @array_slice_1d(%Array* %qs, %Range { i64 3, i64 -1, i64 0 }, i1 true)
  %odd = call %Array* @array_slice_1d(%Array* %rev, %Range { i64 0, i64 2, i64 3 }, i1 true)
  %0 = call i8* @array_get_element_ptr_1d(%Array* %odd, i64 1)
  %1 = bitcast i8* %0 to %Qubit**
  %a = load %Qubit*, %Qubit** %1, align 8
  call void @qis__h__body(%Qubit* %a)
  %2 = call i8* @array_get_element_ptr_1d(%Array* %qs, i64 1)
  %3 = bitcast i8* %2 to %Qubit**
  %b = load %Qubit*, %Qubit** %3, align 8
  call void @qis__h__body(%Qubit* %b)
  call void @qubit_release_array(%Array* %qs)
  ret void
}

attributes #0 = { "EntryPoint" }
"""

m = parse_module(text)
f = m.entry_points()[0]
slices = compute_slices(f)

# %rev is qs[3], qs[2], qs[1], qs[0]; %odd takes every other one of those.
for info in slices:
    print(f"%{info.slice_i.name:<4} -> register positions {info.q_ref}")

loads = collect_load_ops(f, slices)
for d in loads:
    print(f"load %{d.load_inst.name} reads register qubit {d.resolved_qubit}")

reference = interpret(m)
print(f"merged {qdfo_load(f, loads, slices)} redundant load(s)")
assert trace_equal(reference, interpret(m))
