"""
Always, never, or sometimes: what the Maverick does to the model
================================================================

Three fixed policies isolate the Maverick's effect:

* ``mav-never`` never selects it, so class 0 is never trained;
* ``mav-always`` selects it every round and fills the remaining slots at random;
* ``mav-random`` is plain random selection, so it is sometimes picked.

Watch the recall of class 0 and the overall accuracy. Without the Maverick
the class is never learned. With it in every round, its large weight pulls
the global model towards class 0 at the expense of the others.

Run with ``python demos/03_fixed_policies.py``.
"""

from __future__ import annotations

import numpy as np

from fedsim import run_simulation
from fedsim.scenarios import desk_config

POLICIES = ("mav-never", "mav-random", "mav-always")
SEEDS = range(10)

# %%
# One seed, a few checkpoints
# ---------------------------

runs = {p: run_simulation(desk_config(p, seed=0, shapley=False)) for p in POLICIES}
print("round  " + "  ".join(f"{p:>22s}" for p in POLICIES))
print("       " + "  ".join(f"{'acc':>10s} {'recall0':>11s}" for _ in POLICIES))
for t in (1, 5, 10, 20, 40, 60):
    cells = []
    for p in POLICIES:
        r = runs[p].rounds[t - 1]
        cells.append(f"{r.accuracy:10.3f} {r.per_class_recall[0]:11.3f}")
    print(f"{t:5d}  " + "  ".join(cells))

# %%
# Final values over seeds
# -----------------------

print("\npolicy       final acc (mean)  final class-0 recall (mean)")
for p in POLICIES:
    finals = [run_simulation(desk_config(p, seed=s, shapley=False)) for s in SEEDS]
    acc = np.mean([f.rounds[-1].accuracy for f in finals])
    rec = np.mean([f.maverick_recall()[-1] for f in finals])
    print(f"{p:12s} {acc:16.3f}  {rec:27.3f}")
