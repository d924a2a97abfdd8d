"""Ground truth and theory: the centralized minimizer, relative error,
the convergence-rate calculator and the Lyapunov norm it contracts."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import objective as obj
from .data import AgentShard
from .state import HyperParams, MatrixState
from .topology import Topology


class ConvergenceError(RuntimeError):
    pass


class RateConditionError(ValueError):
    pass


# -- centralized problem -----------------------------------------------------

class _Pooled:
    """``(1/n) sum_i f_i`` over shards, with per-sample weights ``1/(n D_i)``."""

    def __init__(self, shards, ridge):
        self.W = np.vstack([s.W for s in shards])
        self.y = np.concatenate([s.y for s in shards])
        n = len(shards)
        self.wt = np.concatenate([np.full(s.size, 1.0 / (n * s.size)) for s in shards])
        self.ridge = ridge

    def value(self, x):
        z = self.W @ x
        return float(self.wt @ (obj._softplus_neg(z) + (1 - self.y) * z) + 0.5 * self.ridge * x @ x)

    def grad(self, x):
        return self.W.T @ (self.wt * (expit(self.W @ x) - self.y)) + self.ridge * x

    def hess(self, x):
        s = expit(self.W @ x)
        return (self.W.T * (self.wt * s * (1 - s))) @ self.W + self.ridge * np.eye(x.size)


def prox_grad_residual(grad, x, gamma, step=1.0):
    """Norm of the prox-gradient mapping ``(x - prox(x - s g, s gamma)) / s``."""
    return float(np.linalg.norm(x - obj.prox_l1(x - step * grad, step * gamma)) / step)


def optimality_residual(grad, x, gamma):
    """Distance of ``0`` from ``grad + gamma * subdiff ||x||_1``, coordinatewise sup."""
    nz = x != 0
    r = np.where(nz, np.abs(grad + gamma * np.sign(x)), np.maximum(np.abs(grad) - gamma, 0.0))
    return float(r.max(initial=0.0))


def solve_centralized(shards: list[AgentShard], gamma: float, ridge: float = 0.0,
                      tol: float = 1e-10, x0=None, max_iter: int = 1_000_000) -> np.ndarray:
    """Minimize ``(1/n) sum_i f_i(x) + gamma ||x||_1``.

    Accelerated proximal gradient with backtracking and gradient restarts,
    followed by Newton polishing on the detected support. Stops when the
    prox-gradient mapping (unit step) has norm at most ``tol``.
    """
    P = _Pooled(shards, ridge)
    d = P.W.shape[1]
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    L = 1.0
    yk, xk, tk = x.copy(), x.copy(), 1.0
    res = np.inf
    for it in range(max_iter):
        g = P.grad(yk)
        fy = P.value(yk)
        while True:
            xn = obj.prox_l1(yk - g / L, gamma / L)
            dx = xn - yk
            if P.value(xn) <= fy + g @ dx + 0.5 * L * dx @ dx + 1e-15 * abs(fy):
                break
            L *= 2.0
        tn = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        if (yk - xn) @ (xn - xk) > 0:  # restart momentum
            tn, yk = 1.0, xn.copy()
        else:
            yk = xn + (tk - 1) / tn * (xn - xk)
        xk, tk = xn, tn
        L *= 0.9
        if it % 20 == 0:
            res = prox_grad_residual(P.grad(xk), xk, gamma)
            if res <= tol:
                return xk
            if res <= 1e-6:
                xp = _polish(P, xk, gamma)
                if prox_grad_residual(P.grad(xp), xp, gamma) <= tol:
                    return xp
    raise ConvergenceError(f"centralized solver stopped at residual {res:.3e} after {max_iter} iterations")


def _polish(P, x, gamma, iters=20):
    x = x.copy()
    supp = x != 0
    if not supp.any():
        return x
    sgn = np.sign(x[supp])
    for _ in range(iters):
        g = P.grad(x)[supp] + gamma * sgn
        H = P.hess(x)[np.ix_(supp, supp)]
        x[supp] -= np.linalg.solve(H, g)
        if np.any(np.sign(x[supp]) != sgn):
            break
        if np.linalg.norm(g) < 1e-14:
            break
    return x


def protocol_optimum(shards, gamma, ridge=0.0, tol=1e-10, x0=None):
    """Consensus point of the network iteration.

    Agents carry unscaled ``f_i``, so the protocol minimizes
    ``sum_i f_i + gamma ||.||_1``, i.e. the centralized problem with weight
    ``gamma / n``.
    """
    return solve_centralized(shards, gamma / len(shards), ridge, tol, x0)


def _cache_key(shards, gamma, ridge) -> str:
    h = hashlib.sha256()
    for s in shards:
        h.update(np.ascontiguousarray(s.W).tobytes())
        h.update(np.ascontiguousarray(s.y).tobytes())
    h.update(repr((float(gamma), float(ridge))).encode())
    return h.hexdigest()[:24]


def cached_optimum(shards, gamma, ridge, cache_dir) -> np.ndarray:
    """:func:`protocol_optimum` memoized in ``cache_dir/xstar_<hash>.npy``."""
    path = Path(cache_dir) / f"xstar_{_cache_key(shards, gamma, ridge)}.npy"
    if path.exists():
        return np.load(path)
    x = protocol_optimum(shards, gamma, ridge)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, x)
    return x


def relative_error(X, X0, x_star) -> float:
    """``sum_i ||x_i - x*||^2 / sum_i ||x_i^0 - x*||^2``."""
    X = np.asarray(X, dtype=float)
    den = float(np.sum((np.asarray(X0, dtype=float) - x_star) ** 2))
    if den == 0.0:
        raise ZeroDivisionError("initial point coincides with the optimum")
    return float(np.sum((X - x_star) ** 2) / den)


# -- rate calculator ---------------------------------------------------------

@dataclass
class RateConstants:
    m_f: float
    M_f: float
    c: np.ndarray
    xi: np.ndarray
    zeta: float
    mu_z: float
    mu_theta: float
    eps: np.ndarray
    E: np.ndarray
    sigma_plus_min: float
    sigma_Lu_max: float
    max_degree: int

    def __post_init__(self):
        for name in ("c", "xi", "eps"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.E = np.asarray(self.E, dtype=int)
        if not 0 < self.m_f <= self.M_f:
            raise RateConditionError(f"need 0 < m_f <= M_f, got {self.m_f}, {self.M_f}")
        if np.any((self.c <= 0) | (self.c >= 1)):
            raise RateConditionError("contraction estimates must lie in (0, 1)")
        if np.any((self.xi <= 0) | (self.xi >= 1 / self.c - 1)):
            raise RateConditionError("xi_i must lie in (0, 1/c_i - 1)")
        if abs(self.mu_z - 2 * self.mu_theta) > 1e-12 * max(self.mu_z, 1.0):
            warnings.warn("the rate bound is derived for mu_z = 2 mu_theta", stacklevel=2)

    @property
    def M(self) -> float:
        return lipschitz_M(self.M_f, self.mu_z, self.max_degree, self.mu_theta, self.eps)

    @property
    def tau(self) -> np.ndarray:
        return np.array([tau(c, E, xi, self.M) for c, E, xi in zip(self.c, self.E, self.xi)])

    @property
    def zeta_lower(self) -> float:
        return (self.m_f + self.M_f) / (2 * self.m_f * self.M_f)


def default_xi(c) -> np.ndarray:
    """Midpoint of the admissible interval ``(0, 1/c - 1)``."""
    return 0.5 * (1.0 / np.asarray(c, dtype=float) - 1.0)


def lipschitz_M(M_f, mu_z, max_degree, mu_theta, eps) -> float:
    """``M_f + mu_z max|N_i| + mu_theta + max eps_i``."""
    return float(M_f + mu_z * max_degree + mu_theta + np.max(eps))


def tau(c: float, E: int, xi: float, M: float) -> float:
    """``(1 + 1/xi) M^2 c^E / (1 - (1 + xi) c^E)``."""
    cE = c ** E
    den = 1.0 - (1.0 + xi) * cE
    if den <= 0 or xi <= 0:
        raise RateConditionError(f"(1+xi) c^E = {(1 + xi) * cE:.4g} must be < 1 with xi > 0")
    return (1.0 + 1.0 / xi) * M * M * cE / den


def eta_first_term(tau_i, eps, zeta, mu_theta, sigma_plus_min) -> float:
    """``min_i mu_theta sigma (eps_i - zeta tau_i) / (5 (tau_i + eps_i^2))``."""
    tau_i, eps = np.asarray(tau_i, dtype=float), np.asarray(eps, dtype=float)
    return float(np.min(mu_theta * sigma_plus_min * (eps - zeta * tau_i) / (5 * (tau_i + eps ** 2))))


def eta_tuned_first_term(tau_i, zeta, mu_theta, sigma_plus_min) -> float:
    """Closed form of :func:`eta_first_term` at ``eps_i = epsilon_star(tau_i, zeta)``."""
    tau_i = np.asarray(tau_i, dtype=float)
    return float(mu_theta * sigma_plus_min / (10 * zeta)
                 * np.min(1.0 / (np.sqrt(tau_i ** 2 + tau_i / zeta ** 2) + tau_i)))


def eta_terms(rc: RateConstants) -> np.ndarray:
    """The five candidates whose minimum is the rate parameter ``eta``."""
    t = rc.tau
    spm, slu = rc.sigma_plus_min, rc.sigma_Lu_max
    mM = 2 * rc.m_f * rc.M_f / (rc.m_f + rc.M_f)
    return np.array([
        eta_first_term(t, rc.eps, rc.zeta, rc.mu_theta, spm),
        (mM - 1.0 / rc.zeta) / (np.max(rc.eps) + rc.mu_theta * (slu + 2)),
        0.4 * rc.mu_theta * spm / (rc.m_f + rc.M_f),
        spm / (5 * max(1.0, slu)),
        0.5,
    ])


def check_conditions(rc: RateConstants) -> list[str]:
    """Human readable list of violated hypotheses of the rate theorem."""
    t = rc.tau
    bad = []
    if rc.zeta <= rc.zeta_lower:
        bad.append(f"zeta={rc.zeta:.4g} <= (m_f+M_f)/(2 m_f M_f)={rc.zeta_lower:.4g}")
    with np.errstate(divide="ignore"):
        upper = np.min(np.where(t > 0, rc.eps / t, np.inf))
    if rc.zeta >= upper:
        bad.append(f"zeta={rc.zeta:.4g} >= min eps_i/tau_i={upper:.4g}")
    low = t * rc.zeta_lower
    for i in np.flatnonzero(rc.eps <= low):
        bad.append(f"eps_{i}={rc.eps[i]:.4g} <= tau_i (m_f+M_f)/(2 m_f M_f)={low[i]:.4g}")
    return bad


def eta(rc: RateConstants) -> float:
    bad = check_conditions(rc)
    if bad:
        raise RateConditionError("rate conditions violated: " + "; ".join(bad))
    return float(eta_terms(rc).min())


def eta_tuned_terms(rc: RateConstants) -> np.ndarray:
    """Candidates for ``eta`` when every ``eps_i`` is set by :func:`epsilon_star`.

    ``tau_i`` is taken from ``rc`` as given, i.e. with ``M`` evaluated at
    ``rc.eps``.
    """
    t = rc.tau
    eps = epsilon_star(t, rc.zeta)
    spm, slu = rc.sigma_plus_min, rc.sigma_Lu_max
    mM = 2 * rc.m_f * rc.M_f / (rc.m_f + rc.M_f)
    return np.array([
        eta_tuned_first_term(t, rc.zeta, rc.mu_theta, spm),
        (mM - 1.0 / rc.zeta) / (np.max(eps) + rc.mu_theta * (slu + 2)),
        0.4 * rc.mu_theta * spm / (rc.m_f + rc.M_f),
        spm / (5 * max(1.0, slu)),
        0.5,
    ])


def eta_tuned(rc: RateConstants) -> float:
    if rc.zeta <= rc.zeta_lower:
        raise RateConditionError(f"zeta={rc.zeta:.4g} <= (m_f+M_f)/(2 m_f M_f)={rc.zeta_lower:.4g}")
    return float(eta_tuned_terms(rc).min())


def epsilon_star(tau_i, zeta: float):
    """Maximizer over ``eps`` of ``(eps - zeta tau) / (tau + eps^2)``:
    ``zeta tau + sqrt(zeta^2 tau^2 + tau)``."""
    tau_i = np.asarray(tau_i, dtype=float)
    out = zeta * tau_i + np.sqrt(zeta ** 2 * tau_i ** 2 + tau_i)
    return float(out) if out.ndim == 0 else out


def contraction_factor(eta_value: float, p_min: float) -> float:
    """Expected per-round decrease ``1 - eta p_min / (1 + eta)``."""
    return 1.0 - eta_value * p_min / (1.0 + eta_value)


def estimate_curvature(shards, x_points, batch: int | None, rng, ridge: float = 0.0,
                       draws: int = 20):
    """Extreme eigenvalues of mini-batch loss Hessians.

    Returns ``(m_f, M_f)``: ``M_f`` is the largest eigenvalue seen, ``m_f``
    is ``ridge`` when positive, otherwise the smallest eigenvalue seen
    floored at 1e-8 (with a warning, the loss alone is not strongly convex).
    """
    lo, hi = np.inf, 0.0
    for s in shards:
        for x in x_points:
            for _ in range(draws if batch else 1):
                idx = slice(None) if not batch else rng.choice(s.size, size=min(batch, s.size), replace=False)
                ev = np.linalg.eigvalsh(obj.logistic_hess(s.W[idx], x, ridge))
                lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    if ridge > 0:
        return float(ridge), float(hi)
    warnings.warn("no ridge: strong convexity estimated from sampled Hessians only", stacklevel=2)
    return float(max(lo, 1e-8)), float(hi)


# -- Lyapunov norm -----------------------------------------------------------

def kkt_point(topo: Topology, shards, hp: HyperParams, x_star) -> MatrixState:
    """Fixed point ``v*`` matching ``x*``.

    ``lambda* = -sum_i grad f_i(x*)`` and ``alpha*`` is the minimum-norm
    solution of ``E_s^T alpha = -grad f(x*) - S lambda*``; iterates started
    from ``alpha = 0`` stay in the range of ``E_s`` and converge to it.
    """
    n = topo.n
    G = np.stack([obj.logistic_grad(s.W, s.y, x_star, hp.ridge) for s in shards])
    lam = -G.sum(axis=0)
    rhs = -G
    rhs[hp.q] -= lam
    Es = topo.E_s.toarray().astype(float)
    alpha = np.linalg.lstsq(Es.T, rhs, rcond=None)[0]
    X = np.tile(x_star, (n, 1))
    z = 0.5 * (topo.E_u @ X)
    return MatrixState(x=X, z=z, alpha=alpha, beta=-alpha, theta=x_star.copy(), lam=lam,
                       phi=Es.T @ alpha)


def lyapunov_norm(state: MatrixState, ref: MatrixState, hp: HyperParams, p=None,
                  weighting: str = "per-agent") -> float:
    """``||v - v*||^2`` in the metric ``diag(Gamma, 2 mu_z, 2/mu_z, mu_theta, 1/mu_theta) P^-1``.

    With ``weighting="per-agent"`` block ``x_i`` is divided by ``p_i`` and the
    other blocks by ``p_min``; ``"uniform"`` divides everything by ``p_min``.
    """
    p = hp.p if p is None else np.asarray(p, dtype=float)
    pmin = float(np.min(p))
    dx = np.sum((state.x - ref.x) ** 2, axis=1)
    wx = hp.eps / (p if weighting == "per-agent" else pmin)
    if weighting not in ("per-agent", "uniform"):
        raise ValueError(f"unknown weighting {weighting!r}")
    rest = (2 * hp.mu_z * np.sum((state.z - ref.z) ** 2)
            + 2 / hp.mu_z * np.sum((state.alpha - ref.alpha) ** 2)
            + hp.mu_theta * np.sum((state.theta - ref.theta) ** 2)
            + 1 / hp.mu_theta * np.sum((state.lam - ref.lam) ** 2))
    return float(wx @ dx + rest / pmin)
