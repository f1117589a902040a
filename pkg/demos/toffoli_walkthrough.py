"""
Optimizing a Toffoli gate, one stage at a time
==============================================

The builtin Toffoli circuit expands to 15 Clifford+T gates. A naive frontend
reloads both qubits for every gate and builds a fresh control array inside
a wrapper for every CNOT. This script runs the workflow on it, reports the counts after every
stage and prints the final module.
"""

from qdfo.corpus import builtin
from qdfo.ir import print_module
from qdfo.oracle import count_idioms, interpret, trace_equal
from qdfo.workflow import run_workflow

m = builtin("toffoli").emit()
reference = interpret(m)
c = count_idioms(m)
print(f"before: {c.load_ops} qubit loads, {c.create_ops} control arrays, {c.instructions} instructions")

# A one-line summary per stage. Loads redirected by qdfo-load disappear in
# the cleanup that follows it.
def show(stage, module):
    c = count_idioms(module)
    print(f"  {stage:<17} loads={c.load_ops:<3} creates={c.create_ops:<2} instructions={c.instructions}")

report = run_workflow(m, on_stage=show)

print(f"\nafter {report.iterations} iterations: {report.reduction:.1%} fewer instructions")
print(f"memory-management calls dropped: {report.mmo_removed}")

# The gate trace is the ground truth: same gates, same qubits, same order.
assert trace_equal(reference, interpret(m))
print("gate traces agree\n")
print(print_module(m))
