import numpy as np
import pytest

from conftest import perturbed_state, random_instance
from druid_vl import objective as obj
from druid_vl.data import ijcnn1_like, partition
from druid_vl.local_solver import (LocalSolveError, SolverKind, estimate_contraction, newton_direction,
                                   run_local, subproblem_minimizer)
from druid_vl.metrics import flop_cost
from druid_vl.protocol import init_run, stream
from druid_vl.state import HyperParams
from druid_vl.topology import generate_erdos_renyi


def test_newton_direction_identity_and_scaled():
    g = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(newton_direction(np.eye(3), g), g, rtol=1e-15)
    np.testing.assert_allclose(newton_direction(4.0 * np.eye(3), g), g / 4.0, rtol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_newton_direction_residual(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 30))
    A = rng.normal(size=(d, d))
    H = A @ A.T + 0.1 * np.eye(d)
    g = rng.normal(size=d)
    x = newton_direction(H, g)
    assert np.linalg.norm(H @ x - g) <= 1e-10 * np.linalg.norm(g)


def test_newton_direction_not_pd_names_agent_and_round():
    with pytest.raises(LocalSolveError, match=r"agent=3, round=7"):
        newton_direction(-np.eye(2), np.ones(2), agent=3, round_=7)


def test_solver_kind_validation():
    with pytest.raises(ValueError):
        SolverKind("bfgs")
    with pytest.raises(ValueError):
        SolverKind.gradient_descent(0.0)
    with pytest.raises(ValueError):
        SolverKind.exact(tol=0.0)


@pytest.mark.parametrize("seed", range(6))
def test_full_batch_single_step_equals_deterministic(seed):
    topo, shards, hp = random_instance(4, 3, seed)
    agents, reg = perturbed_state(topo, shards, hp, seed)
    for a in agents:
        sto = run_local(a, reg, SolverKind.stochastic_newton(a.shard.size, a.shard.size), hp,
                        np.random.default_rng(seed))
        det = run_local(a, reg, SolverKind.deterministic_newton(), hp)
        np.testing.assert_array_equal(sto.x, det.x)
        assert sto.flops == det.flops == flop_cost("deterministic_newton", 3, a.shard.size, a.shard.size)


@pytest.mark.parametrize("seed", range(5))
def test_more_local_work_approaches_exact(seed):
    topo, shards, hp = random_instance(4, 3, seed)
    agents, reg = perturbed_state(topo, shards, hp, seed)
    for a in agents:
        exact = run_local(a, reg, SolverKind.exact(tol=1e-13), hp).x
        dist = []
        for E in range(1, 7):
            a.E = E
            full = SolverKind.stochastic_newton(a.shard.size, a.shard.size)
            dist.append(np.linalg.norm(run_local(a, reg, full, hp, np.random.default_rng(0)).x - exact))
        dist = np.array(dist)
        assert np.all((np.diff(dist) < 0) | (dist[1:] < 1e-12))


def test_reference_scale_minibatch_step_is_finite():
    ds = ijcnn1_like()
    shards = partition(ds, 10, "shuffled", stream(0, 1))
    topo = generate_erdos_renyi(10, 0.2, stream(0, 0))
    hp = HyperParams.uniform(10, mu_z=5e-5, mu_theta=1e-4, gamma=2e-6, eps=1e-4, E=10)
    agents, reg = init_run(topo, shards, hp)
    res = run_local(agents[3], reg, SolverKind.stochastic_newton(100, 100), hp, stream(0, 3, 3))
    assert res.iterations == 10 and np.all(np.isfinite(res.x))
    assert res.flops == flop_cost("stochastic_newton", 22, 100, 100, 10)


@pytest.mark.parametrize("seed", range(8))
def test_full_batch_newton_descends_local_model(seed):
    topo, shards, hp = random_instance(4, 3, seed)
    agents, reg = perturbed_state(topo, shards, hp, seed)
    full = SolverKind.deterministic_newton()
    for a in agents:
        a0 = a.x.copy()
        x = a.x.copy()
        for _ in range(5):
            # one Newton step on the round model, anchor held at a0
            trial = type(a)(**{**a.__dict__, "x": a0})
            g = obj.local_sto_gradient(trial, reg, x, None, hp)
            H = obj.local_subsampled_hessian(trial, x, None, hp)
            x_new = x - newton_direction(H, g)
            assert obj.local_model_value(trial, reg, x_new, hp) <= obj.local_model_value(trial, reg, x, hp) + 1e-12
            x = x_new
        assert np.isfinite(run_local(a, reg, full, hp).x).all()


@pytest.mark.parametrize("seed", range(5))
def test_exact_mode_meets_tolerance(seed):
    topo, shards, hp = random_instance(4, 3, seed, inner_model="anchored")
    agents, reg = perturbed_state(topo, shards, hp, seed)
    for a in agents:
        res = run_local(a, reg, SolverKind.exact(tol=1e-8), hp)
        hp_full = HyperParams(**{**hp.__dict__, "inner_model": "full"})
        g = obj.local_sto_gradient(a, reg, res.x, None, hp_full)
        assert np.linalg.norm(g) <= 1e-8 and not res.capped
        assert res.flops == flop_cost("exact", 3, a.shard.size, a.shard.size, res.iterations)
        np.testing.assert_allclose(res.x, subproblem_minimizer(a, reg, hp_full), atol=1e-7)


def test_exact_mode_cap_sets_flag():
    topo, shards, hp = random_instance(3, 3, 1)
    agents, reg = perturbed_state(topo, shards, hp, 1)
    res = run_local(agents[0], reg, SolverKind.exact(tol=1e-300, max_iter=3), hp)
    assert res.capped and res.iterations == 3


def test_gradient_descent_step():
    topo, shards, hp = random_instance(3, 3, 2)
    agents, reg = perturbed_state(topo, shards, hp, 2)
    a = agents[1]
    res = run_local(a, reg, SolverKind.gradient_descent(0.1), hp)
    np.testing.assert_allclose(res.x, a.x - 0.1 * obj.local_sto_gradient(a, reg, a.x, None, hp), rtol=1e-14)
    assert res.flops == 2 * a.shard.size * 3


@pytest.mark.parametrize("seed", range(4))
def test_full_batch_contraction_probe(seed):
    topo, shards, hp = random_instance(4, 3, seed)
    agents, reg = perturbed_state(topo, shards, hp, seed)
    for a in agents:
        x_star = subproblem_minimizer(a, reg, hp)
        d0 = np.sum((a.x - x_star) ** 2)
        ratios = []
        for E in (1, 2, 3):
            a.E = E
            x = run_local(a, reg, SolverKind.stochastic_newton(a.shard.size, a.shard.size), hp,
                          np.random.default_rng(0)).x
            ratios.append(np.sum((x - x_star) ** 2) / d0)
        assert ratios[0] < 1
        assert all(r2 <= r1 for r1, r2 in zip(ratios, ratios[1:]))
        c = estimate_contraction(a, reg, hp)
        assert 0 <= c < 1


def test_run_local_leaves_agent_untouched():
    topo, shards, hp = random_instance(3, 3, 4, E=np.full(3, 3))
    agents, reg = perturbed_state(topo, shards, hp, 4)
    a = agents[0]
    before = (a.x.copy(), a.phi.copy(), {k: v.copy() for k, v in a.cache.items()})
    run_local(a, reg, SolverKind.stochastic_newton(10, 10), hp, np.random.default_rng(1))
    np.testing.assert_array_equal(a.x, before[0])
    np.testing.assert_array_equal(a.phi, before[1])
    for k in before[2]:
        np.testing.assert_array_equal(a.cache[k], before[2][k])
