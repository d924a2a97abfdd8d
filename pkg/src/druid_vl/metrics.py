"""Per-round accounting: error, communication and a deterministic flop model."""

from __future__ import annotations

import csv
from dataclasses import dataclass

CSV_HEADER = ("t", "active_count", "rel_err", "comm_vectors", "comm_cum_per_agent",
              "flops", "wall_ms", "lyapunov")


@dataclass
class RoundRecord:
    t: int
    active: tuple[int, ...]
    rel_err: float
    comm_vectors: int
    comm_cum_per_agent: float
    flops: float
    wall_ms: float | None = None
    lyapunov: float | None = None

    def row(self) -> list:
        return [self.t, len(self.active), repr(float(self.rel_err)), self.comm_vectors,
                repr(float(self.comm_cum_per_agent)), repr(float(self.flops)),
                "" if self.wall_ms is None else f"{self.wall_ms:.3f}",
                "" if self.lyapunov is None else repr(float(self.lyapunov))]


def flop_cost(kind: str, d: int, batch_g: int, batch_h: int, iterations: int = 1) -> float:
    """Cost-model units for one agent's primal update.

    A gradient over ``b`` samples costs ``2 b d``, assembling a Hessian costs
    ``b d^2`` and a Cholesky factor plus solve ``d^3/3 + 2 d^2``. Newton-type
    kinds pay all three per inner iteration; gradient descent only the
    gradient.
    """
    if kind == "gradient_descent":
        per = 2.0 * batch_g * d
    elif kind in ("stochastic_newton", "deterministic_newton", "exact"):
        per = 2.0 * batch_g * d + batch_h * d * d + d ** 3 / 3.0 + 2.0 * d * d
    else:
        raise ValueError(f"unknown solver kind {kind!r}")
    return per * iterations


def rounds_to_error(records, target: float):
    """First round index whose relative error is at or below ``target``."""
    if not records:
        raise ValueError("empty trajectory")
    for r in records:
        if r.rel_err <= target:
            return r.t
    return None


def value_at_target(records, target: float, attr: str):
    """``attr`` of the first record reaching ``target`` (``None`` if never)."""
    for r in records:
        if r.rel_err <= target:
            return getattr(r, attr)
    return None


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())

