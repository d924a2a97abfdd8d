"""
Communication graph and the incidence/Laplacian machinery built on it.

All matrices live at the n x n (or |E| x n) level. The d-dimensional block
extension ``M kron I_d`` is applied implicitly by multiplying an ``(n, d)``
array of stacked agent vectors, i.e. ``topo.E_s @ X`` is the stacked
``E_s x`` for ``x = X.ravel()``.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


POSITIVE_TOL = 1e-10


class GraphError(ValueError):
    """Raised for invalid, empty or disconnected graphs."""


@dataclass(frozen=True)
class Topology:
    """Undirected graph with its signed/unsigned incidence structure.

    Edges are stored lexicographically as ``(i, j)`` with ``i < j``; the
    smaller index is the edge source and the larger one the destination.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    E_s: sp.csr_array = field(repr=False)
    E_u: sp.csr_array = field(repr=False)
    L_s: sp.csr_array = field(repr=False)
    L_u: sp.csr_array = field(repr=False)
    D: sp.csr_array = field(repr=False)
    neighbors: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return self.D.diagonal().astype(int)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0


def from_edges(n: int, edges) -> Topology:
    """Build a :class:`Topology` from an iterable of undirected pairs.

    Self loops are rejected, duplicates (in either orientation) collapse to
    a single edge.
    """
    if n < 1:
        raise GraphError("graph needs at least one node")
    clean = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b:
            raise GraphError(f"self loop at node {a}")
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"edge ({a}, {b}) out of range for n={n}")
        clean.add((min(a, b), max(a, b)))
    ordered = tuple(sorted(clean))
    m = len(ordered)

    rows = np.repeat(np.arange(m), 2)
    cols = np.array([v for e in ordered for v in e], dtype=int)
    signs = np.tile([1, -1], m)
    A_s = sp.csr_array((np.ones(m, dtype=np.int64), (np.arange(m), cols[0::2])), shape=(m, n))
    A_d = sp.csr_array((np.ones(m, dtype=np.int64), (np.arange(m), cols[1::2])), shape=(m, n))
    E_s = sp.csr_array((signs.astype(np.int64), (rows, cols)), shape=(m, n))
    E_u = (A_s + A_d).tocsr()
    L_s = (E_s.T @ E_s).tocsr()
    L_u = (E_u.T @ E_u).tocsr()
    D = sp.csr_array(((L_u + L_s).toarray() // 2))

    nbrs = [[] for _ in range(n)]
    for a, b in ordered:
        nbrs[a].append(b)
        nbrs[b].append(a)
    return Topology(
        n=n,
        edges=ordered,
        E_s=E_s,
        E_u=E_u,
        L_s=L_s,
        L_u=L_u,
        D=D,
        neighbors=tuple(tuple(sorted(x)) for x in nbrs),
    )


def is_connected(topo: Topology) -> bool:
    """Breadth-first reachability from node 0."""
    if topo.n == 0:
        return False
    seen = np.zeros(topo.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in topo.neighbors[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def algebraic_connectivity(topo: Topology) -> float:
    """Second smallest eigenvalue of the signed Laplacian."""
    if topo.n < 2:
        return 0.0
    return float(np.linalg.eigvalsh(topo.L_s.toarray().astype(float))[1])


def generate_erdos_renyi(n: int, p: float, rng: np.random.Generator, max_attempts: int = 10000) -> Topology:
    """Sample a connected G(n, p) graph by whole-graph rejection.

    Each of the ``n(n-1)/2`` candidate edges is kept independently with
    probability ``p``; disconnected draws are discarded and the graph is
    resampled from the same stream.
    """
    if n < 2:
        raise GraphError("Erdos-Renyi generation needs n >= 2")
    if not 0 < p <= 1:
        raise GraphError(f"edge probability must lie in (0, 1], got {p}")
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_attempts):
        keep = rng.random(iu.size) < p
        topo = from_edges(n, zip(iu[keep], ju[keep]))
        if is_connected(topo):
            return topo
    raise GraphError(f"graph generation failed after {max_attempts} attempts (n={n}, p={p})")


@dataclass(frozen=True)
class SpectralConstants:
    sigma_plus_min: float
    sigma_Lu_max: float


def spectral_constants(topo: Topology, q: int) -> SpectralConstants:
    """Smallest positive eigenvalue of the Gram matrix of ``[E_s; e_q^T]``
    and the largest eigenvalue of the unsigned Laplacian.

    The nonzero spectra of ``M M^T`` and ``M^T M`` coincide, so the n x n
    Gram ``L_s + e_q e_q^T`` is used.
    """
    if not 0 <= q < topo.n:
        raise GraphError(f"regularizer agent q={q} out of range")
    if topo.num_edges == 0:
        raise GraphError("spectral constants undefined for a graph without edges")
    gram = topo.L_s.toarray().astype(float)
    gram[q, q] += 1.0
    ev = np.linalg.eigvalsh(gram)
    pos = ev[ev > POSITIVE_TOL]
    if pos.size == 0:
        raise GraphError("stacked operator is singular")
    lu = np.linalg.eigvalsh(topo.L_u.toarray().astype(float))
    return SpectralConstants(sigma_plus_min=float(pos.min()), sigma_Lu_max=float(lu.max()))


def write_edge_csv(topo: Topology, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst"])
        w.writerows(topo.edges)


def read_edge_csv(path, n: int | None = None) -> Topology:
    """Load a ``src,dst`` edge list; ``n`` defaults to ``max index + 1``."""
    edges = []
    with open(Path(path), newline="") as fh:
        for k, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().lower() == "src":
                continue
            try:
                edges.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError) as exc:
                raise GraphError(f"{path}:{k}: malformed edge row {row!r}") from exc
    if n is None:
        n = 1 + max(max(e) for e in edges) if edges else 1
    return from_edges(n, edges)
