"""LIBSVM parsing, sharding across agents and mini-batch sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np


class DataFormatError(ValueError):
    pass


class Sample(NamedTuple):
    w: np.ndarray
    y: float


@dataclass(frozen=True)
class Dataset:
    """Dense design matrix ``W`` (N x d) with labels ``y`` in {0, 1}."""

    W: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.y.shape != (self.W.shape[0],):
            raise DataFormatError(f"inconsistent shapes W{self.W.shape} y{self.y.shape}")

    def __len__(self) -> int:
        return self.W.shape[0]

    def __getitem__(self, k) -> Sample:
        return Sample(self.W[k], float(self.y[k]))

    @property
    def dim(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class AgentShard:
    index: int
    W: np.ndarray
    y: np.ndarray

    @property
    def size(self) -> int:
        return self.W.shape[0]


def _label(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DataFormatError(f"line {lineno}: bad label {tok!r}") from None
    if v == 1.0:
        return 1.0
    if v in (0.0, -1.0):
        return 0.0
    raise DataFormatError(f"line {lineno}: label {tok!r} is not binary")


def parse_libsvm_lines(lines, d: int, limit: int | None = None) -> Dataset:
    rows, labels = [], []
    for lineno, line in enumerate(lines, start=1):
        if limit is not None and len(rows) >= limit:
            break
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        labels.append(_label(toks[0], lineno))
        w = np.zeros(d)
        for tok in toks[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise DataFormatError(f"line {lineno}: malformed feature {tok!r}")
            try:
                k, v = int(idx), float(val)
            except ValueError:
                raise DataFormatError(f"line {lineno}: malformed feature {tok!r}") from None
            if k < 1:
                raise DataFormatError(f"line {lineno}: feature index {k} < 1")
            if k > d:
                raise DataFormatError(f"line {lineno}: feature index {k} exceeds d={d}")
            w[k - 1] = v
        rows.append(w)
    W = np.array(rows, dtype=float).reshape(len(rows), d)
    return Dataset(W, np.array(labels, dtype=float))


def parse_libsvm(path, d: int, limit: int | None = None) -> Dataset:
    """Read a LIBSVM text file into a dense :class:`Dataset`.

    Feature indices in the file are 1-based; labels ``-1``/``0`` map to 0 and
    ``+1`` to 1. ``limit`` keeps only the first ``limit`` samples.
    """
    with open(Path(path), encoding="utf-8") as fh:
        return parse_libsvm_lines(fh, d, limit)


def format_libsvm(data: Dataset) -> str:
    """Inverse of :func:`parse_libsvm_lines`; zero features are omitted."""
    out = []
    for w, y in zip(data.W, data.y):
        feats = " ".join(f"{k + 1}:{float(w[k])!r}" for k in np.flatnonzero(w))
        out.append(f"{int(y)} {feats}".rstrip())
    return "\n".join(out) + "\n"


def write_libsvm(data: Dataset, path) -> None:
    Path(path).write_text(format_libsvm(data), encoding="utf-8")


def partition(data: Dataset, n: int, strategy: str = "shuffled", rng: np.random.Generator | None = None) -> list[AgentShard]:
    """Split samples into ``n`` disjoint shards of size floor or ceil of N/n.

    ``strategy`` is ``"contiguous"`` or ``"shuffled"`` (needs ``rng``).
    Earlier shards get the extra samples when N is not divisible by n.
    """
    N = len(data)
    if n < 1 or n > N:
        raise DataFormatError(f"cannot split {N} samples over {n} agents")
    if strategy == "contiguous":
        order = np.arange(N)
    elif strategy == "shuffled":
        if rng is None:
            raise ValueError("shuffled partition needs an rng")
        order = rng.permutation(N)
    else:
        raise ValueError(f"unknown partition strategy {strategy!r}")
    return [
        AgentShard(i, data.W[idx], data.y[idx])
        for i, idx in enumerate(np.array_split(order, n))
    ]


def sample_batch(shard: AgentShard | int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw of ``size`` distinct sample indices."""
    D = shard if isinstance(shard, (int, np.integer)) else shard.size
    if not 1 <= size <= D:
        raise ValueError(f"batch size {size} not in [1, {D}]")
    return rng.choice(D, size=size, replace=False)


def make_synthetic(n_samples: int = 4000, d: int = 22, rng: np.random.Generator | None = None,
                   positive_rate: float = 0.1, n_categorical: int = 10,
                   signal: float = 1.0) -> Dataset:
    """Generate an ijcnn1-shaped binary classification set.

    The first ``n_categorical`` features are a one-hot encoding, the rest are
    correlated continuous values clipped to [-1, 1]. Labels come from a
    sparse logistic model whose weights have scale ``signal`` and whose bias
    is tuned so the expected share of positives is ``positive_rate``.
    """
    if not 0 <= n_categorical <= d:
        raise ValueError(f"n_categorical={n_categorical} must lie in [0, d={d}]")
    rng = np.random.default_rng(0) if rng is None else rng
    n_cont = d - n_categorical
    W = np.zeros((n_samples, d))
    if n_categorical:
        W[np.arange(n_samples), rng.integers(0, n_categorical, n_samples)] = 1.0
    mix = rng.normal(size=(n_cont, n_cont)) / np.sqrt(n_cont)
    cont = rng.normal(size=(n_samples, n_cont)) @ mix.T * 0.4 + rng.uniform(-0.3, 0.3, n_cont)
    W[:, n_categorical:] = np.clip(cont, -1.0, 1.0)

    beta = rng.normal(scale=signal, size=d)
    beta[rng.random(d) < 0.3] = 0.0
    score = W @ beta
    lo, hi = -50.0, 50.0
    for _ in range(100):  # bisection on the bias to hit the positive rate
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(score + mid)))) < positive_rate:
            lo = mid
        else:
            hi = mid
    prob = 1.0 / (1.0 + np.exp(-(score + 0.5 * (lo + hi))))
    y = (rng.random(n_samples) < prob).astype(float)
    return Dataset(W, y)


# Calibrated to the public ijcnn1 statistics: ~9.7% positives and ~92%
# training accuracy for a linear logistic model.
IJCNN1_LIKE = dict(positive_rate=0.097, n_categorical=10, signal=2.0)
IJCNN1_LIKE_SEED = 1234


def ijcnn1_like(n_samples: int = 4000, d: int = 22, seed: int = IJCNN1_LIKE_SEED) -> Dataset:
    """Offline stand-in for the first ``n_samples`` rows of ijcnn1."""
    return make_synthetic(n_samples, d, np.random.default_rng(seed), **IJCNN1_LIKE)
