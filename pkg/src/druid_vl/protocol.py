"""Round orchestration over the simulated network.

A round has three phases separated by barriers: every active agent runs
its local solver against the neighbour values it has cached, the new
iterates are broadcast into the neighbours' caches (merge order fixed by
agent index), then active agents update their duals and, if the
regularizer owner is active, ``theta``/``lambda`` are updated.

:func:`run_matrix_reference` iterates the equivalent stacked recursion
with explicit ``z``, ``alpha`` and ``beta`` and serves as an oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import objective as obj
from .data import AgentShard, sample_batch
from .local_solver import LocalResult, SolverKind, run_local
from .metrics import RoundRecord
from .state import AgentState, HyperParams, MatrixState, RegularizerState
from .topology import Topology

# spawn-key prefixes of the named streams derived from one master seed
GRAPH_STREAM = 0
PARTITION_STREAM = 1
PARTICIPATION_STREAM = 2
BATCH_STREAM = 3
DATA_STREAM = 4
PROFILE_STREAM = 5


class InvariantViolation(AssertionError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream ``key`` of master ``seed``.

    Streams are ``SeedSequence(seed, spawn_key=key)`` children, so distinct
    keys give statistically independent, non-overlapping PCG64 streams.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class Streams:
    participation: np.random.Generator
    batches: list[np.random.Generator]

    @classmethod
    def from_seed(cls, seed: int, n: int) -> "Streams":
        return cls(stream(seed, PARTICIPATION_STREAM),
                   [stream(seed, BATCH_STREAM, i) for i in range(n)])


def init_run(topo: Topology, shards: list[AgentShard], hp: HyperParams, x0=None):
    """Initial agent states and regularizer state.

    ``x0`` is ``(n, d)`` or ``None`` for zeros. Duals start at zero,
    ``theta = x_q`` and ``lambda = 0``; caches hold the neighbours' ``x0``.
    """
    n = topo.n
    if len(shards) != n or hp.n != n:
        raise ValueError(f"need {n} shards and hyper-parameters, got {len(shards)} and {hp.n}")
    d = shards[0].W.shape[1]
    X0 = np.zeros((n, d)) if x0 is None else np.array(x0, dtype=float).reshape(n, d)
    agents = [
        AgentState(index=i, x=X0[i].copy(), phi=np.zeros(d),
                   cache={j: X0[j].copy() for j in topo.neighbors[i]},
                   shard=shards[i], eps=float(hp.eps[i]), E=int(hp.E[i]), p=float(hp.p[i]),
                   neighbors=topo.neighbors[i])
        for i in range(n)
    ]
    reg = RegularizerState(q=hp.q, theta=X0[hp.q].copy(), lam=np.zeros(d), mu_theta=hp.mu_theta)
    return agents, reg


def sample_active(p, rng: np.random.Generator) -> np.ndarray:
    """Indices of agents active this round, each independently with prob ``p_i``.

    Exactly ``n`` uniforms are consumed per call whatever ``p`` is.
    """
    p = np.asarray(p, dtype=float)
    return np.flatnonzero(rng.random(p.size) < p)


@dataclass
class RoundOutcome:
    active: np.ndarray
    flops: np.ndarray
    comm_vectors: int
    results: dict[int, LocalResult] = field(default_factory=dict)


def run_round(agents: list[AgentState], reg: RegularizerState, topo: Topology, hp: HyperParams,
              kind: SolverKind, streams: Streams, t: int = 0, active=None,
              per_edge: bool = False) -> RoundOutcome:
    """Advance the network by one global round, mutating ``agents`` and ``reg``."""
    if active is None:
        active = sample_active(hp.p, streams.participation)
    active = np.asarray(sorted(int(i) for i in active), dtype=int)

    # primal phase: independent per agent, reads only pre-round state
    results = {int(i): run_local(agents[i], reg, kind, hp, streams.batches[i], round_=t)
               for i in active}

    # broadcast barrier
    for i in active:
        agents[i].x = results[i].x
    for i in active:
        for j in topo.neighbors[i]:
            agents[j].cache[i] = agents[i].x.copy()

    # dual phase
    for i in active:
        a = agents[i]
        a.phi = a.phi + 0.5 * hp.mu_z * a.neighbor_sum()
    if hp.q in results:
        xq = agents[hp.q].x
        reg.theta = obj.prox_l1(xq + reg.lam / hp.mu_theta, hp.gamma / hp.mu_theta)
        reg.lam = reg.lam + hp.mu_theta * (xq - reg.theta)

    flops = np.zeros(len(agents))
    for i, r in results.items():
        flops[i] = r.flops
    comm = int(sum(topo.degrees[i] for i in active)) if per_edge else int(active.size)
    return RoundOutcome(active, flops, comm, results)


def stacked(agents) -> np.ndarray:
    return np.stack([a.x for a in agents])


def to_matrix_state(agents, reg, topo: Topology) -> MatrixState:
    """Stacked view of a distributed state.

    ``alpha`` is the minimum-norm solution of ``E_s^T alpha = phi``, which is
    the iterate itself whenever the run started from ``alpha = 0``.
    """
    X = stacked(agents)
    Phi = np.stack([a.phi for a in agents])
    Es = topo.E_s.toarray().astype(float)
    alpha = np.linalg.lstsq(Es.T, Phi, rcond=None)[0]
    z = 0.5 * (topo.E_u @ X)
    return MatrixState(x=X, z=z, alpha=alpha, beta=-alpha, theta=reg.theta.copy(),
                       lam=reg.lam.copy(), phi=Phi)


def simulate(topo: Topology, shards: list[AgentShard], hp: HyperParams, kind: SolverKind,
             x_star, rounds: int, streams: Streams | None = None, x0=None,
             stop_at: float | None = None, per_edge: bool = False, lyapunov=None,
             wall_clock: bool = False, diverge_at: float | None = None) -> list[RoundRecord]:
    """Run ``rounds`` rounds and return one :class:`RoundRecord` per round,
    starting with the ``t = 0`` record.

    ``lyapunov`` is an optional callable ``(MatrixState) -> float``. With
    ``stop_at`` the run ends at the first round whose relative error is
    below that value; with ``diverge_at`` it ends early once the error exceeds
    that value or stops being finite.
    """
    from .oracle import relative_error

    streams = streams or Streams.from_seed(hp.seed, topo.n)
    agents, reg = init_run(topo, shards, hp, x0)
    X0 = stacked(agents)
    n = topo.n

    def record(t, active, comm_total, flops_total, wall):
        rec = RoundRecord(t=t, active=tuple(int(i) for i in active),
                          rel_err=relative_error(stacked(agents), X0, x_star),
                          comm_vectors=0, comm_cum_per_agent=comm_total / n,
                          flops=flops_total, wall_ms=wall)
        if lyapunov is not None:
            rec.lyapunov = float(lyapunov(to_matrix_state(agents, reg, topo)))
        return rec

    records = [record(0, (), 0, 0.0, 0.0 if wall_clock else None)]
    comm_total, flops_total = 0, 0.0
    for t in range(1, rounds + 1):
        tic = time.perf_counter()
        out = run_round(agents, reg, topo, hp, kind, streams, t=t, per_edge=per_edge)
        wall = (time.perf_counter() - tic) * 1e3 if wall_clock else None
        comm_total += out.comm_vectors
        flops_total += float(out.flops.sum())
        rec = record(t, out.active, comm_total, flops_total, wall)
        rec.comm_vectors = out.comm_vectors
        records.append(rec)
        if stop_at is not None and rec.rel_err <= stop_at:
            break
        if diverge_at is not None and not rec.rel_err <= diverge_at:
            break
    return records


def _incidence(topo: Topology):
    Es = topo.E_s.toarray().astype(float)
    Eu = topo.E_u.toarray().astype(float)
    return Es, Eu, 0.5 * (Eu + Es), 0.5 * (Eu - Es)


def run_matrix_reference(topo: Topology, shards: list[AgentShard], hp: HyperParams,
                         rounds: int, kind: SolverKind, streams: Streams | None = None,
                         x0=None, check_tol: float = 1e-8) -> list[MatrixState]:
    """Iterate the stacked synchronous recursion and return all states.

    The primal step solves the full ``nd x nd`` Newton system assembled with
    Kronecker products; blocks whose work load is exhausted are held fixed.
    ``z`` and the split dual ``(alpha, beta)`` are updated explicitly from
    their own minimization / ascent steps, and after every round the run
    checks ``alpha + beta = 0``, ``z = E_u x / 2`` and that
    ``phi`` follows ``phi += mu_z L_s x / 2``.

    Only the Newton kinds are supported. For ``stochastic_newton`` the batch
    streams must be consumed exactly as :func:`run_round` does, so pass a
    fresh :class:`Streams` built from the same seed to compare runs.
    """
    if kind.name not in ("stochastic_newton", "deterministic_newton"):
        raise ValueError(f"matrix reference supports Newton kinds only, got {kind.name}")
    n, m = topo.n, topo.num_edges
    d = shards[0].W.shape[1]
    streams = streams or Streams.from_seed(hp.seed, n)
    Es, Eu, As, Ad = _incidence(topo)
    I = np.eye(d)
    Ls_k = np.kron(topo.L_s.toarray().astype(float), I)
    D_k = np.kron(topo.D.toarray().astype(float), I)
    e_q = np.zeros((n, 1))
    e_q[hp.q] = 1.0
    S = np.kron(e_q, I)
    Gamma = np.kron(np.diag(hp.eps), I)
    fixed_H = hp.mu_z * D_k + hp.mu_theta * S @ S.T + Gamma
    # the part of the fixed Hessian that also multiplies (x^{t,e-1} - x^t) in the gradient
    moving = Gamma if hp.inner_model == "anchored" else fixed_H
    E = hp.E if kind.name == "stochastic_newton" else np.ones(n, dtype=int)

    X0 = np.zeros((n, d)) if x0 is None else np.array(x0, dtype=float).reshape(n, d)
    st = MatrixState(x=X0.copy(), z=0.5 * Eu @ X0, alpha=np.zeros((m, d)), beta=np.zeros((m, d)),
                     theta=X0[hp.q].copy(), lam=np.zeros(d), phi=np.zeros((n, d)))
    traj = [st.copy()]
    for _ in range(rounds):
        xt = st.x.ravel()
        phi = (Es.T @ st.alpha).ravel()
        const = phi + S @ st.lam + 0.5 * hp.mu_z * Ls_k @ xt + hp.mu_theta * S @ (S.T @ xt - st.theta)
        x = xt.copy()
        for e in range(1, int(E.max()) + 1):
            live = E >= e
            g = np.zeros(n * d)
            H = fixed_H.copy()
            for i in range(n):
                if not live[i]:
                    continue
                sh = shards[i]
                if kind.name == "stochastic_newton":
                    ig = np.sort(sample_batch(sh.size, kind.batch_g or sh.size, streams.batches[i]))
                    ih = np.sort(sample_batch(sh.size, kind.batch_h or sh.size, streams.batches[i]))
                else:
                    ig = ih = slice(None)
                blk = slice(i * d, (i + 1) * d)
                xi = x[blk]
                g[blk] = obj.logistic_grad(sh.W[ig], sh.y[ig], xi, hp.ridge)
                H[blk, blk] += obj.logistic_hess(sh.W[ih], xi, hp.ridge)
            rhs = g + const + moving @ (x - xt)
            step = np.linalg.solve(H, rhs)
            mask = np.repeat(live, d)
            x = np.where(mask, x - step, x)

        X = x.reshape(n, d)
        theta = obj.prox_l1(X[hp.q] + st.lam / hp.mu_theta, hp.gamma / hp.mu_theta)
        z = (st.alpha + st.beta) / (2.0 * hp.mu_z) + 0.5 * (As @ X + Ad @ X)
        alpha = st.alpha + hp.mu_z * (As @ X - z)
        beta = st.beta + hp.mu_z * (Ad @ X - z)
        lam = st.lam + hp.mu_theta * (X[hp.q] - theta)
        phi_rec = st.phi + 0.5 * hp.mu_z * (topo.L_s @ X)
        st = MatrixState(x=X, z=z, alpha=alpha, beta=beta, theta=theta, lam=lam, phi=Es.T @ alpha)

        scale = max(1.0, np.abs(X).max(), np.abs(alpha).max())
        checks = {
            "alpha + beta = 0": np.abs(alpha + beta).max(),
            "z = E_u x / 2": np.abs(z - 0.5 * Eu @ X).max(),
            "phi recursion": np.abs(phi_rec - st.phi).max(),
        }
        for name, err in checks.items():
            if err > check_tol * scale:
                raise InvariantViolation(f"{name} violated by {err:.3e} at round {len(traj)}")
        traj.append(st.copy())
    return traj


def tune_epsilons(E, eps_bar: float, E_bar: float, c: float, zeta: float) -> np.ndarray:
    """Work-load-aware proximal weights.

    ``eps_i = eps_bar c^(E_i - E_bar) [1 - (1+zeta) c^E_bar] / [1 - (1+zeta) c^E_i]``
    """
    E = np.asarray(E, dtype=float)
    if not 0 < c < 1 or zeta <= 0:
        raise ValueError("need c in (0, 1) and zeta > 0")
    den = 1.0 - (1.0 + zeta) * c ** E
    if np.any(den <= 0):
        raise ValueError("(1 + zeta) c^E_i >= 1 for some agent; use a smaller zeta or larger E_i")
    num = 1.0 - (1.0 + zeta) * c ** E_bar
    return eps_bar * c ** (E - E_bar) * num / den
