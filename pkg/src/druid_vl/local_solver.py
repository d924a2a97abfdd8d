"""Per-agent primal update: inner Newton loop and the baseline variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import objective as obj
from .data import sample_batch
from .metrics import flop_cost
from .state import AgentState, HyperParams, RegularizerState


class LocalSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverKind:
    """Which local update an agent runs.

    ``name`` is one of ``stochastic_newton`` (E_i steps on fresh mini-batches),
    ``deterministic_newton`` (one full-batch step), ``gradient_descent`` (one
    full-batch step of size ``step``) or ``exact`` (full-batch Newton on the
    true sub-problem until its gradient norm is below ``tol``).
    """

    name: str
    batch_g: int | None = None
    batch_h: int | None = None
    step: float | None = None
    tol: float = 1e-5
    max_iter: int = 200

    KINDS = ("stochastic_newton", "deterministic_newton", "gradient_descent", "exact")

    def __post_init__(self):
        if self.name not in self.KINDS:
            raise ValueError(f"unknown solver kind {self.name!r}")
        if self.name == "gradient_descent" and (self.step is None or self.step <= 0):
            raise ValueError("gradient descent needs a positive step size")
        if self.tol <= 0:
            raise ValueError("exact tolerance must be positive")

    @classmethod
    def stochastic_newton(cls, batch_g: int, batch_h: int) -> "SolverKind":
        return cls("stochastic_newton", batch_g=batch_g, batch_h=batch_h)

    @classmethod
    def deterministic_newton(cls) -> "SolverKind":
        return cls("deterministic_newton")

    @classmethod
    def gradient_descent(cls, step: float) -> "SolverKind":
        return cls("gradient_descent", step=step)

    @classmethod
    def exact(cls, tol: float = 1e-5, max_iter: int = 200) -> "SolverKind":
        return cls("exact", tol=tol, max_iter=max_iter)


@dataclass
class LocalResult:
    x: np.ndarray
    flops: float
    iterations: int
    capped: bool = False


def newton_direction(H, g, agent: int | None = None, round_: int | None = None) -> np.ndarray:
    """Solve ``H d = g`` for symmetric positive definite ``H`` via Cholesky."""
    try:
        c = cho_factor(H, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise LocalSolveError(
            f"local Hessian not positive definite (agent={agent}, round={round_})") from exc
    return cho_solve(c, g, check_finite=False)


def run_local(agent: AgentState, reg: RegularizerState | None, kind: SolverKind,
              hp: HyperParams, rng: np.random.Generator | None = None,
              round_: int | None = None) -> LocalResult:
    """Run one agent's primal update from its round anchor ``agent.x``.

    The agent is not mutated; the new iterate is returned together with its
    cost-model flop count. Stochastic Newton draws fresh ``b_g`` then ``b_H``
    from ``rng`` at every inner iteration. Batch indices are sorted so a full
    batch reproduces the deterministic step bit for bit.
    """
    d = agent.x.size
    D = agent.shard.size
    W, y = agent.shard.W, agent.shard.y
    base = obj.coupling_gradient(agent, reg, hp)
    s = obj.shift(agent, hp)
    pw = obj.prox_weight(agent, hp)

    def grad(x, Wg, yg):
        return obj.logistic_grad(Wg, yg, x, hp.ridge) + base + pw * (x - agent.x)

    def hess(x, Wh):
        H = obj.logistic_hess(Wh, x, hp.ridge)
        H[np.diag_indices_from(H)] += s
        return H

    x = agent.x.copy()
    if kind.name == "stochastic_newton":
        bg, bh = kind.batch_g or D, kind.batch_h or D
        for _ in range(agent.E):
            ig = np.sort(sample_batch(D, bg, rng))
            ih = np.sort(sample_batch(D, bh, rng))
            g = grad(x, W[ig], y[ig])
            x = x - newton_direction(hess(x, W[ih]), g, agent.index, round_)
        return LocalResult(x, flop_cost(kind.name, d, bg, bh, agent.E), agent.E)

    if kind.name == "deterministic_newton":
        x = x - newton_direction(hess(x, W), grad(x, W, y), agent.index, round_)
        return LocalResult(x, flop_cost(kind.name, d, D, D, 1), 1)

    if kind.name == "gradient_descent":
        x = x - kind.step * grad(x, W, y)
        return LocalResult(x, flop_cost(kind.name, d, D, D, 1), 1)

    # exact: Newton on the true sub-problem regardless of hp.inner_model
    def true_grad(x):
        return obj.logistic_grad(W, y, x, hp.ridge) + base + s * (x - agent.x)

    it = 0
    g = true_grad(x)
    while np.linalg.norm(g) > kind.tol and it < kind.max_iter:
        x = x - newton_direction(hess(x, W), g, agent.index, round_)
        g = true_grad(x)
        it += 1
    # priced as `it` deterministic Newton iterations
    return LocalResult(x, flop_cost("exact", d, D, D, it), it, capped=bool(np.linalg.norm(g) > kind.tol))


def subproblem_minimizer(agent: AgentState, reg, hp: HyperParams, tol: float = 1e-12,
                         model: str | None = None) -> np.ndarray:
    """Full-batch zero of the local gradient under ``model`` (defaults to ``hp.inner_model``)."""
    model = model or hp.inner_model
    W, y = agent.shard.W, agent.shard.y
    base = obj.coupling_gradient(agent, reg, hp)
    s = obj.shift(agent, hp)
    pw = s if model == "full" else agent.eps
    x = agent.x.copy()
    for _ in range(200):
        g = obj.logistic_grad(W, y, x, hp.ridge) + base + pw * (x - agent.x)
        if np.linalg.norm(g) <= tol:
            break
        # true Newton on this gradient: its Jacobian has shift pw, not s
        H = obj.logistic_hess(W, x, hp.ridge)
        H[np.diag_indices_from(H)] += pw
        x = x - newton_direction(H, g, agent.index)
    return x


def estimate_contraction(agent: AgentState, reg, hp: HyperParams, steps: int = 5) -> float:
    """Largest observed per-step ratio ``||x^{e} - x*||^2 / ||x^{e-1} - x*||^2``
    of full-batch inner Newton steps from the agent's current anchor.

    Used as the empirical ``c_i`` for the rate calculator.
    """
    x_star = subproblem_minimizer(agent, reg, hp)
    worst = 0.0
    x_prev = agent.x.copy()
    for _ in range(steps):
        x_new = _full_step(agent, reg, hp, x_prev)
        den = np.sum((x_prev - x_star) ** 2)
        if den <= 1e-28:
            break
        worst = max(worst, float(np.sum((x_new - x_star) ** 2) / den))
        x_prev = x_new
    return worst


def _full_step(agent, reg, hp, x):
    g = obj.local_sto_gradient(agent, reg, x, None, hp)
    H = obj.local_subsampled_hessian(agent, x, None, hp)
    return x - newton_direction(H, g, agent.index)
