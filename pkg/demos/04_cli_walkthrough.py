"""
The command line, end to end
============================

Everything above is also available through the ``fedsim`` command. This
script drives it on the configs in ``configs/`` and writes into a temporary
directory:

1. ``fedsim partition-inspect`` prints who holds which classes;
2. ``fedsim run`` writes a run directory (rounds.csv, summary.json, manifest.json, ...);
3. ``fedsim compare`` tabulates R@99 against a reference strategy;
4. ``fedsim verify`` runs the numerical self-checks.

Run with ``python demos/04_cli_walkthrough.py``.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fedsim.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp)

    # %%
    # Who holds what
    # --------------
    main(["partition-inspect", "--config", str(CONFIGS / "desk_random.json"), "--out", str(out)])

    # %%
    # Two runs with the same seed
    # ---------------------------
    for name in ("desk_random", "desk_fedemd"):
        main(["run", "--config", str(CONFIGS / f"{name}.json"), "--out", str(out / name), "--no-timings"])
    summary = json.loads((out / "desk_fedemd" / "summary.json").read_text())
    print(f"\nfedemd summary: final accuracy {summary['final_accuracy']:.4f}, U {summary['fairness_U']:.4f}")
    print("first rows of rounds.csv:")
    print("".join((out / "desk_fedemd" / "rounds.csv").read_text().splitlines(keepends=True)[:3]))

    # %%
    # Compare against random
    # ----------------------
    main(["compare", str(out / "desk_fedemd"), "--reference", str(out / "desk_random"), "--out", str(out)])

    # %%
    # Self-checks
    # -----------
    main(["verify", "--seed", "0"])
