"""
How the reduction grows with circuit size
=========================================

Random circuits over eight qubits, from 18 gates up. Register setup and
teardown cost the same at every size, so the fraction removed climbs as
the gate count grows and then flattens out.
"""

import sys

from qdfo.cli import run_sweep

sizes = [int(a) for a in sys.argv[1:]] or [18, 50, 100, 500, 2000]
rows = run_sweep(sizes, jobs=len(sizes))

print(f"{'gates':>6} {'before':>8} {'after':>7} {'reduction':>10}  verified")
for r in rows:
    print(f"{r.gates:>6} {r.instr_before:>8} {r.instr_after:>7} {r.reduction_ratio:>10.1%}  {r.verified}")

# A crude picture: one '#' per two percent.
print()
for r in rows:
    print(f"{r.gates:>6} " + "#" * round(r.reduction_ratio * 50))
