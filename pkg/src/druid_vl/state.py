"""Containers shared by the objective, local solver and protocol."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AgentShard


@dataclass
class HyperParams:
    """Penalty weights, per-agent knobs and run controls.

    ``eps``, ``E`` and ``p`` are length-n arrays (ε_i, local work E_i and
    participation probability p_i). ``q`` is the agent that owns the
    regularizer variables. ``inner_model`` picks the local gradient used by
    the inner Newton loop, see :func:`druid_vl.objective.local_sto_gradient`.
    """

    mu_z: float
    mu_theta: float
    gamma: float
    eps: np.ndarray
    E: np.ndarray
    p: np.ndarray
    batch_g: int = 100
    batch_h: int = 100
    ridge: float = 0.0
    seed: int = 0
    rounds: int = 100
    q: int = 0
    inner_model: str = "full"

    def __post_init__(self):
        if self.inner_model not in ("anchored", "full"):
            raise ValueError(f"unknown inner model {self.inner_model!r}")
        self.eps = np.asarray(self.eps, dtype=float)
        self.E = np.asarray(self.E, dtype=int)
        self.p = np.asarray(self.p, dtype=float)
        n = self.eps.size
        if self.E.shape != (n,) or self.p.shape != (n,):
            raise ValueError("eps, E and p must all have length n")
        if self.mu_z <= 0 or self.mu_theta <= 0:
            raise ValueError("penalty weights mu_z, mu_theta must be positive")
        if self.gamma < 0 or self.ridge < 0:
            raise ValueError("gamma and ridge must be non-negative")
        if np.any(self.eps <= 0):
            raise ValueError("every eps_i must be positive")
        if np.any(self.E < 1):
            raise ValueError("every E_i must be >= 1")
        if np.any(self.p <= 0) or np.any(self.p > 1):
            raise ValueError("participation probabilities must lie in (0, 1]")
        if self.batch_g < 1 or self.batch_h < 1:
            raise ValueError("batch sizes must be positive")
        if not 0 <= self.q < n:
            raise ValueError(f"q={self.q} out of range for n={n}")

    @property
    def n(self) -> int:
        return self.eps.size

    @property
    def p_min(self) -> float:
        return float(self.p.min())

    @classmethod
    def uniform(cls, n: int, *, mu_z: float, mu_theta: float, gamma: float, eps: float,
                E: int = 1, p: float = 1.0, **kw) -> "HyperParams":
        return cls(mu_z=mu_z, mu_theta=mu_theta, gamma=gamma, eps=np.full(n, eps),
                   E=np.full(n, E), p=np.full(n, p), **kw)


class CacheError(LookupError):
    """A neighbour value needed by the local update was never received."""


@dataclass
class AgentState:
    """What agent ``index`` knows: its primal/dual pair and the last vectors
    received from each neighbour.

    ``neighbors`` defaults to the cache keys.
    """

    index: int
    x: np.ndarray
    phi: np.ndarray
    cache: dict[int, np.ndarray]
    shard: AgentShard
    eps: float
    E: int
    p: float
    neighbors: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.neighbors is None:
            self.neighbors = tuple(sorted(self.cache))
        if self.eps <= 0:
            raise ValueError(f"agent {self.index}: eps must be positive")

    @property
    def degree(self) -> int:
        return len(self.neighbors)

    def neighbor_sum(self) -> np.ndarray:
        """Sum over neighbours of ``x_i - x_j`` using cached ``x_j``."""
        total = np.zeros_like(self.x)
        for j in self.neighbors:
            try:
                total += self.x - self.cache[j]
            except KeyError:
                raise CacheError(f"agent {self.index} has no cached value from neighbour {j}") from None
        return total


@dataclass
class RegularizerState:
    q: int
    theta: np.ndarray
    lam: np.ndarray
    mu_theta: float


@dataclass
class MatrixState:
    """Stacked iterate of the centralized recursion.

    ``x`` is ``(n, d)``; ``z``, ``alpha`` and ``beta`` are ``(|E|, d)``.
    ``phi`` equals ``E_s^T alpha`` by construction.
    """

    x: np.ndarray
    z: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    lam: np.ndarray
    phi: np.ndarray = field(default=None)

    def copy(self) -> "MatrixState":
        return MatrixState(*(None if v is None else v.copy() for v in
                             (self.x, self.z, self.alpha, self.beta, self.theta, self.lam, self.phi)))
