"""Quickstart: one DRUID-VL run on the offline ijcnn1 stand-in.

Builds the reference instance (4000 samples, d=22, 10 agents on a connected
Erdos-Renyi graph), solves the centralized problem for x*, then runs the
protocol twice: with full-batch local Newton steps and with the mini-batch
size 100 of the reference configuration.

    python demos/quickstart.py
"""

from druid_vl import ijcnn1_like
from druid_vl.experiments import ExperimentConfig, build_run
from druid_vl.metrics import rounds_to_error
from druid_vl.protocol import simulate

ds = ijcnn1_like()
print(f"stand-in data: {len(ds)} samples, d={ds.dim}, positive rate {ds.y.mean():.3f}")

for label, batch in (("full batch", 4000), ("|b| = 100", 100)):
    cfg = ExperimentConfig(e_profile="equal:10", bg=batch, bh=batch, rounds=150)
    run = build_run(cfg, seed=0, dataset=ds)
    recs = simulate(run.topo, run.shards, run.hp, run.kind, run.x_star, cfg.rounds, diverge_at=1e3)
    print(f"\n{label}: {run.topo.num_edges} edges, nnz(x*) = {(run.x_star != 0).sum()}")
    for r in recs[:: max(1, len(recs) // 6)]:
        print(f"  round {r.t:4d}  rel err {r.rel_err:10.3e}  comm/agent {r.comm_cum_per_agent:6.1f}")
    hit = rounds_to_error(recs, 1e-2)
    print(f"  rounds to 1e-2: {hit if hit is not None else 'not reached'}")

# With 100-sample batches the logistic curvature of the saturated samples is
# too small next to the tiny penalties, so undamped Newton steps overshoot.
