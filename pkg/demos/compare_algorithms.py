"""Rounds versus local compute for the four local-solver choices.

Same instance and seed for every row. Flops follow the deterministic cost
model in :mod:`druid_vl.metrics`, so the table is machine independent.

    python demos/compare_algorithms.py
"""

import numpy as np

from druid_vl import ijcnn1_like
from druid_vl.experiments import ExperimentConfig, build_run
from druid_vl.metrics import rounds_to_error, value_at_target
from druid_vl.protocol import simulate

TARGET = 1e-2
ds = ijcnn1_like()
rows = [
    ("exact ADMM", dict(algorithm="exact-admm")),
    ("Newton, E=1", dict(algorithm="druid-newton")),
    ("VL, E=10, full batch", dict(e_profile="equal:10", bg=4000, bh=4000)),
    ("VL, E=10, |b|=100", dict(e_profile="equal:10")),
    ("gradient descent", dict(algorithm="druid-gd")),
]

print(f"{'variant':24s} {'rounds':>7s} {'flops/round':>12s} {'flops to 1e-2':>14s}")
for label, kw in rows:
    run = build_run(ExperimentConfig(**kw), seed=0, dataset=ds)
    recs = simulate(run.topo, run.shards, run.hp, run.kind, run.x_star, 400,
                    stop_at=TARGET, diverge_at=1e3)
    hit = rounds_to_error(recs, TARGET)
    total = value_at_target(recs, TARGET, "flops")
    per = recs[-1].flops / max(recs[-1].t, 1)
    print(f"{label:24s} {hit if hit is not None else '-':>7} {per:12.3g} "
          f"{'-' if total is None else f'{total:.3g}':>14s}")
