"""
How much is a Maverick worth?
=============================

One client (id 0) owns every training sample of class 0. Everyone else holds
a balanced mix of the other three classes. We run plain random selection and
measure, in every round, the exact Shapley value of each selected client.
The game is loss reduction on the federator's test set, and the empty
coalition is the previous global model.

Two things show up. First, the Maverick usually earns less than its fair
share of credit, even though it carries about two thirds of the aggregation
weight whenever it is selected. Second, system fairness U (one minus the mean
gap between data share and credit share) is lower than in a balanced
federation trained on the same data.

Run with ``python demos/01_maverick_contribution.py``.
"""

from __future__ import annotations

import numpy as np

from fedsim import run_simulation
from fedsim.scenarios import desk_config

SEEDS = range(10)
K = 4

# %%
# A single run, round by round
# ----------------------------
# ``rc`` is the Maverick's relative contribution (negative Shapley values are
# clamped, then the vector is normalised). ``q`` is its share of the round's data.

res = run_simulation(desk_config("random", seed=0))
mav = res.maverick_ids[0]
print("round  selected        acc     q(mav)  rc(mav)")
for r in res.rounds:
    if mav in r.selected:
        pos = r.contribution.client_ids.index(mav)
        print(f"{r.t:5d}  {str(r.selected):14s}  {r.accuracy:.3f}   {r.contribution.q[pos]:.3f}   "
              f"{r.contribution.rc[pos]:.3f}")

# %%
# Pooled over seeds
# -----------------
# Average the Maverick's relative contribution over the rounds where it is
# selected. The fair-share line for K selected clients is 1/K.

early, late = [], []
for seed in SEEDS:
    run = run_simulation(desk_config("random", seed=seed))
    for r in run.rounds:
        if mav in r.selected:
            rc = r.contribution.rc[r.contribution.client_ids.index(mav)]
            (early if r.t <= len(run.rounds) // 5 else late).append(rc)
print(f"\nMaverick mean rc, first 20% of rounds: {np.mean(early):.3f} over {len(early)} selections")
print(f"Maverick mean rc, remaining rounds:    {np.mean(late):.3f} over {len(late)} selections")
print(f"fair-share line 1/K:                   {1 / K:.3f}")

# %%
# Fairness with and without the Maverick
# --------------------------------------

u_mav = np.mean([run_simulation(desk_config("random", seed=s)).fairness for s in SEEDS])
u_bal = np.mean([run_simulation(desk_config("random", seed=s, balanced=True)).fairness for s in SEEDS])
print(f"\nsystem fairness U: with Maverick {u_mav:.3f}, balanced {u_bal:.3f}")
