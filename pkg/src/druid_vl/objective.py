"""Logistic loss, the local sub-problem derivatives and the L1 prox.

The per-sample loss is the {0,1}-label cross entropy

    l(w, y; x) = log(1 + exp(-z)) + (1 - y) z,    z = x^T w,

which equals ``log(1 + exp(z)) - y z``. Its gradient is ``(sigmoid(z) - y) w``.
An optional ridge ``delta/2 ||x||^2`` is added per sample to make the loss
strongly convex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .state import AgentState, HyperParams, RegularizerState


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 0.0
    ridge: float = 0.0

    def __post_init__(self):
        if self.gamma < 0 or self.ridge < 0:
            raise ValueError("gamma and ridge must be non-negative")


def _softplus_neg(z):
    # log(1 + exp(-z)) without overflow
    return np.where(z > 0, np.log1p(np.exp(-np.abs(z))), -z + np.log1p(np.exp(-np.abs(z))))


def logistic_value(W, y, x, ridge=0.0) -> float:
    z = W @ x
    return float(np.mean(_softplus_neg(z) + (1.0 - y) * z) + 0.5 * ridge * x @ x)


def logistic_grad(W, y, x, ridge=0.0) -> np.ndarray:
    r = expit(W @ x) - y
    g = W.T @ r / W.shape[0]
    if ridge:
        g = g + ridge * x
    return g


def logistic_hess(W, x, ridge=0.0) -> np.ndarray:
    s = expit(W @ x)
    H = (W.T * (s * (1.0 - s))) @ W / W.shape[0]
    if ridge:
        H[np.diag_indices_from(H)] += ridge
    return H


def logistic_value_grad_hess(W, y, x, cfg: LossConfig = LossConfig()):
    """Mini-batch average loss, gradient and Hessian at ``x``.

    Parameters
    ----------
    W : ndarray, shape (b, d)
        Feature rows of the batch.
    y : ndarray, shape (b,)
        Labels in {0, 1}.
    x : ndarray, shape (d,)
    cfg : LossConfig
        Only ``ridge`` is used here; the L1 part is handled by :func:`prox_l1`.
    """
    if W.shape[0] == 0:
        raise ValueError("empty batch")
    return (logistic_value(W, y, x, cfg.ridge),
            logistic_grad(W, y, x, cfg.ridge),
            logistic_hess(W, x, cfg.ridge))


def coupling_gradient(agent: AgentState, reg: RegularizerState | None, hp: HyperParams) -> np.ndarray:
    """Round-constant part of the local gradient.

    ``phi_i + mu_z/2 sum_j (x_i - x_j) + [i == q] (mu_theta (x_i - theta) + lambda)``,
    everything evaluated at the round anchor ``agent.x``.
    """
    g = agent.phi + 0.5 * hp.mu_z * agent.neighbor_sum()
    if agent.index == hp.q:
        if reg is None:
            raise ValueError(f"agent {agent.index} owns the regularizer but no state was given")
        g = g + hp.mu_theta * (agent.x - reg.theta) + reg.lam
    return g


def shift(agent: AgentState, hp: HyperParams) -> float:
    """Diagonal weight ``mu_z |N_i| + [i == q] mu_theta + eps_i`` of the local Hessian."""
    return hp.mu_z * agent.degree + (hp.mu_theta if agent.index == hp.q else 0.0) + agent.eps


def local_sto_gradient(agent, reg, x_inner, batch_g, hp: HyperParams) -> np.ndarray:
    """Stochastic gradient of agent ``i``'s perturbed sub-problem at ``x_inner``.

    ``batch_g`` indexes rows of the agent's shard (``None`` for the full shard).
    With ``hp.inner_model == "anchored"`` the coupling terms are frozen at the
    round anchor ``agent.x`` and only ``eps_i (x_inner - agent.x)`` moves.
    With ``"full"`` (the default) the whole Hessian shift multiplies
    ``x_inner - agent.x``, giving the exact gradient of the local block of the
    perturbed AL, so :func:`local_subsampled_hessian` is its Jacobian.
    """
    W, y = agent.shard.W, agent.shard.y
    if batch_g is not None:
        W, y = W[batch_g], y[batch_g]
    return (logistic_grad(W, y, x_inner, hp.ridge)
            + coupling_gradient(agent, reg, hp)
            + prox_weight(agent, hp) * (x_inner - agent.x))


def prox_weight(agent: AgentState, hp: HyperParams) -> float:
    """Weight on ``x_inner - x_i^t`` in the local gradient."""
    if hp.inner_model == "full":
        return shift(agent, hp)
    return agent.eps


def local_subsampled_hessian(agent, x_inner, batch_h, hp: HyperParams) -> np.ndarray:
    W = agent.shard.W if batch_h is None else agent.shard.W[batch_h]
    H = logistic_hess(W, x_inner, hp.ridge)
    H[np.diag_indices_from(H)] += shift(agent, hp)
    return H


def local_model_value(agent, reg, x, hp: HyperParams) -> float:
    """Full-batch value of the agent's block of the perturbed AL, up to a constant.

    Its gradient is the full-batch :func:`local_sto_gradient` under
    ``inner_model="full"``.
    """
    dx = x - agent.x
    val = logistic_value(agent.shard.W, agent.shard.y, x, hp.ridge)
    val += coupling_gradient(agent, reg, hp) @ dx
    val += 0.5 * shift(agent, hp) * dx @ dx
    return float(val)


def prox_l1(u, threshold: float) -> np.ndarray:
    """Soft thresholding ``sign(u) * max(|u| - threshold, 0)``."""
    if threshold < 0:
        raise ValueError(f"negative threshold {threshold}")
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - threshold, 0.0)
