"""Seeded experiment runs, summaries and comparison tables.

An :class:`ExperimentConfig` fully determines its outputs: ``repeats`` runs
with seeds ``seed, seed + 1, ...``, each writing ``run_<k>.csv``, plus a
``summary.csv`` of the rounds, communication and flops needed to reach the
target error.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import oracle, protocol
from .local_solver import SolverKind
from .metrics import rounds_to_error, value_at_target, write_records
from .state import HyperParams
from .topology import generate_erdos_renyi

ALGORITHMS = ("druid-vl", "druid-newton", "druid-gd", "exact-admm")
SUMMARY_HEADER = ("quantity", "mean", "std", "reached", "runs")
COMPARE_HEADER = ("label", "algorithm", "e_profile", "p_min", "eps_mode", "target",
                  "rounds_mean", "rounds_std", "comm_mean", "comm_std",
                  "flops_mean", "flops_std", "reached", "runs")


class ConfigError(ValueError):
    pass


# -- profiles ----------------------------------------------------------------

def parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]


def parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def load_profile(spec: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-agent work loads from a profile string.

    ``equal:k``, ``uniform:lo,hi`` (i.i.d. integers in ``[lo, hi]``),
    ``extreme:lo,hi`` (``lo`` for the first ``n // 2`` agents, ``hi`` for the
    rest) or ``explicit:E_0,...,E_{n-1}``.
    """
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    try:
        vals = parse_int_list(arg)
    except ValueError as exc:
        raise ConfigError(f"bad work-load profile {spec!r}") from exc
    if kind == "equal" and len(vals) == 1:
        E = np.full(n, vals[0])
    elif kind in ("uniform", "extreme") and len(vals) == 2:
        lo, hi = vals
        if lo > hi:
            raise ConfigError(f"profile {spec!r} has lo > hi")
        if kind == "uniform":
            E = rng.integers(lo, hi + 1, size=n)
        else:
            E = np.where(np.arange(n) < n // 2, lo, hi)
    elif kind == "explicit" and len(vals) == n:
        E = np.array(vals)
    else:
        raise ConfigError(f"bad work-load profile {spec!r} for n={n}")
    if np.any(E < 1):
        raise ConfigError(f"profile {spec!r} gives a load below 1")
    return E.astype(int)


def load_participation(spec: str, n: int) -> np.ndarray:
    """``"0.4"`` applies one probability to every agent, a comma list gives one each."""
    vals = parse_float_list(str(spec))
    if len(vals) == 1:
        return np.full(n, vals[0])
    if len(vals) != n:
        raise ConfigError(f"participation list has {len(vals)} entries, need {n}")
    return np.array(vals)


# -- configuration -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Everything one experiment needs.

    ``dataset`` is a LIBSVM path or ``"synthetic"`` for the bundled offline
    ijcnn1 stand-in. ``tune_eps`` is ``None`` for fixed ``eps`` or a
    ``(eps_bar, E_bar, c, zeta)`` tuple for the work-load-aware rule.
    """

    dataset: str = "synthetic"
    dim: int = 22
    samples: int = 4000
    agents: int = 10
    er_p: float = 0.2
    seed: int = 0
    rounds: int = 200
    algorithm: str = "druid-vl"
    e_profile: str = "equal:10"
    p_min: str = "1.0"
    mu_z: float = 5e-5
    mu_theta: float = 1e-4
    gamma: float = 2e-6
    ridge: float = 0.0
    eps: float = 1e-4
    tune_eps: tuple | None = None
    bg: int = 100
    bh: int = 100
    gd_step: float | None = None
    inner_model: str = "full"
    target: float = 1e-2
    repeats: int = 5
    stop_at_target: bool = False
    diverge_at: float | None = None
    wall_clock: bool = False
    out_dir: str = "results"
    label: str = ""

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if isinstance(self.tune_eps, str):
            self.tune_eps = tuple(parse_float_list(self.tune_eps)) if self.tune_eps.strip() else None
        if self.tune_eps is not None and len(self.tune_eps) != 4:
            raise ConfigError("tune_eps needs four values: eps_bar, E_bar, c, zeta")
        if self.repeats < 1 or self.rounds < 1 or self.agents < 1:
            raise ConfigError("repeats, rounds and agents must be positive")
        if not self.target > 0:
            raise ConfigError("target error must be positive")

    @property
    def eps_mode(self) -> str:
        if self.tune_eps is None:
            return f"fixed({self.eps:g})"
        return "tuned(" + ",".join(f"{v:g}" for v in self.tune_eps) + ")"

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


CONFIG_KEYS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    f = CONFIG_KEYS[name]
    t = str(f.type)
    raw = raw.strip()
    if name == "tune_eps":
        return raw or None
    if raw.lower() in ("none", "") and "None" in t:
        return None
    if t.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return raw


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment, dashes in keys allowed)."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{k}: unknown or malformed entry {line!r}")
            out[key] = _coerce(key, val)
    return out


def config_from(file=None, **overrides) -> ExperimentConfig:
    """File values first, then non-``None`` keyword overrides."""
    vals = read_config_file(file) if file else {}
    for key, val in overrides.items():
        if val is None:
            continue
        vals[key] = _coerce(key, val) if isinstance(val, str) else val
    return ExperimentConfig(**vals)


# -- running -----------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> data_mod.Dataset:
    if cfg.dataset == "synthetic":
        return data_mod.ijcnn1_like(cfg.samples, cfg.dim)
    return data_mod.parse_libsvm(cfg.dataset, cfg.dim, limit=cfg.samples)


def gd_step_size(shards, hp: HyperParams) -> float:
    """``1 / M`` with ``M`` an upper bound on every local sub-problem's curvature.

    The logistic Hessian is bounded by ``W^T W / (4 D)``.
    """
    lip = max(np.linalg.eigvalsh(s.W.T @ s.W / s.size)[-1] for s in shards) / 4.0
    shift = hp.mu_z * (hp.n - 1) + hp.mu_theta + float(hp.eps.max())
    return 1.0 / (lip + hp.ridge + shift)


@dataclass
class RunSetup:
    """Instance of one seeded run, exposed for tests and demos."""

    topo: object
    shards: list
    hp: HyperParams
    kind: SolverKind
    x_star: np.ndarray
    seed: int
    extras: dict = field(default_factory=dict)


def build_run(cfg: ExperimentConfig, seed: int, dataset=None) -> RunSetup:
    ds = load_dataset(cfg) if dataset is None else dataset
    n = cfg.agents
    topo = generate_erdos_renyi(n, cfg.er_p, protocol.stream(seed, protocol.GRAPH_STREAM))
    shards = data_mod.partition(ds, n, "shuffled", protocol.stream(seed, protocol.PARTITION_STREAM))
    if cfg.algorithm == "druid-vl":
        E = load_profile(cfg.e_profile, n, protocol.stream(seed, protocol.PROFILE_STREAM))
    else:
        E = np.ones(n, dtype=int)
    if cfg.tune_eps is None:
        eps = np.full(n, cfg.eps)
    else:
        eps_bar, E_bar, c, zeta = cfg.tune_eps
        eps = protocol.tune_epsilons(E, eps_bar, E_bar, c, zeta)
    hp = HyperParams(mu_z=cfg.mu_z, mu_theta=cfg.mu_theta, gamma=cfg.gamma, eps=eps, E=E,
                     p=load_participation(cfg.p_min, n), batch_g=cfg.bg, batch_h=cfg.bh,
                     ridge=cfg.ridge, seed=seed, rounds=cfg.rounds, inner_model=cfg.inner_model)
    if cfg.algorithm == "druid-vl":
        size = min(s.size for s in shards)
        kind = SolverKind.stochastic_newton(min(cfg.bg, size), min(cfg.bh, size))
    elif cfg.algorithm == "druid-newton":
        kind = SolverKind.deterministic_newton()
    elif cfg.algorithm == "druid-gd":
        kind = SolverKind.gradient_descent(cfg.gd_step or gd_step_size(shards, hp))
    else:
        kind = SolverKind.exact()
    x_star = oracle.protocol_optimum(shards, cfg.gamma, cfg.ridge)
    return RunSetup(topo, shards, hp, kind, x_star, seed)


def run_single(cfg: ExperimentConfig, seed: int, dataset=None):
    s = build_run(cfg, seed, dataset)
    return protocol.simulate(s.topo, s.shards, s.hp, s.kind, s.x_star, cfg.rounds,
                             stop_at=cfg.target if cfg.stop_at_target else None,
                             wall_clock=cfg.wall_clock, diverge_at=cfg.diverge_at)


def _mean_std(vals):
    got = [v for v in vals if v is not None]
    if not got:
        return None, None, 0
    return float(np.mean(got)), float(np.std(got)), len(got)


@dataclass
class Summary:
    rounds: list
    comm: list
    flops: list

    @property
    def runs(self) -> int:
        return len(self.rounds)

    def stats(self, name: str):
        return _mean_std(getattr(self, name))


def summarize(trajectories, target: float) -> Summary:
    return Summary(
        rounds=[rounds_to_error(r, target) for r in trajectories],
        comm=[value_at_target(r, target, "comm_cum_per_agent") for r in trajectories],
        flops=[value_at_target(r, target, "flops") for r in trajectories],
    )


def _fmt(v):
    return "" if v is None else repr(v)


def write_summary(summary: Summary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for name, q in (("rounds", "rounds_to_target"), ("comm", "comm_to_target"),
                        ("flops", "flops_to_target")):
            mean, std, reached = summary.stats(name)
            w.writerow([q, _fmt(mean), _fmt(std), reached, summary.runs])


def run_experiment(cfg: ExperimentConfig, dataset=None) -> Summary:
    """Execute ``cfg.repeats`` runs and write their CSVs into ``cfg.out_dir``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg) if dataset is None else dataset
    trajs = []
    for k in range(cfg.repeats):
        recs = run_single(cfg, cfg.seed + k, ds)
        write_records(recs, out / f"run_{k}.csv")
        trajs.append(recs)
    summary = summarize(trajs, cfg.target)
    write_summary(summary, out / "summary.csv")
    return summary


def compare_suite(cfgs, path, dataset=None) -> list[list]:
    """Run every config and write one row per config into the CSV ``path``.

    Each config writes its own run files under its ``out_dir``.
    """
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("nothing to compare")
    if len({c.target for c in cfgs}) > 1:
        raise ConfigError("all configurations must share the target error")
    if len({(c.dataset, c.dim, c.samples) for c in cfgs}) > 1:
        raise ConfigError("all configurations must share the dataset")
    ds = load_dataset(cfgs[0]) if dataset is None else dataset
    rows = []
    for k, cfg in enumerate(cfgs):
        s = run_experiment(cfg, ds)
        r, c, f = s.stats("rounds"), s.stats("comm"), s.stats("flops")
        rows.append([cfg.label or f"cfg{k}", cfg.algorithm, cfg.e_profile, cfg.p_min, cfg.eps_mode,
                     repr(cfg.target), _fmt(r[0]), _fmt(r[1]), _fmt(c[0]), _fmt(c[1]),
                     _fmt(f[0]), _fmt(f[1]), r[2], s.runs])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_HEADER)
        w.writerows(rows)
    return rows
