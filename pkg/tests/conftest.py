import numpy as np
import pytest

from druid_vl.data import AgentShard, Dataset, make_synthetic, partition
from druid_vl.protocol import init_run
from druid_vl.state import HyperParams
from druid_vl.topology import generate_erdos_renyi


def random_instance(n, d, seed, samples_per_agent=40, p=0.6, **hp_kw):
    """Small connected instance with random per-agent parameters."""
    rng = np.random.default_rng(seed)
    topo = generate_erdos_renyi(n, p, rng)
    ds = make_synthetic(n * samples_per_agent, d, rng, positive_rate=0.3,
                        n_categorical=min(2, d - 1), signal=1.0)
    shards = partition(ds, n, "shuffled", rng)
    kw = dict(mu_z=rng.uniform(0.05, 0.5), mu_theta=rng.uniform(0.05, 0.5), gamma=rng.uniform(0, 0.02),
              eps=rng.uniform(0.05, 0.5, n), E=np.ones(n, dtype=int), p=np.ones(n), q=int(rng.integers(n)))
    kw.update(hp_kw)
    return topo, shards, HyperParams(**kw)


def perturbed_state(topo, shards, hp, seed):
    """Agents and regularizer state with every field randomized.

    ``phi`` is drawn as ``E_s^T alpha`` so that the state is reachable.
    """
    rng = np.random.default_rng(seed)
    d = shards[0].W.shape[1]
    agents, reg = init_run(topo, shards, hp, rng.normal(size=(topo.n, d)))
    Phi = topo.E_s.T @ rng.normal(size=(topo.num_edges, d))
    for a in agents:
        a.phi = Phi[a.index]
    reg.theta = rng.normal(size=d)
    reg.lam = rng.normal(size=d)
    return agents, reg


@pytest.fixture
def small_instance():
    return random_instance(5, 4, seed=11)
