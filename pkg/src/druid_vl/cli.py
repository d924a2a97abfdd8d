"""Command-line front end.

    python -m druid_vl run --config base.cfg --e-profile uniform:1,19 --out-dir out/u
    python -m druid_vl compare a.cfg b.cfg c.cfg --table out/table.csv
    python -m druid_vl synth data.svm --samples 4000

Config files hold ``key = value`` lines whose keys are the long option names
(dashes or underscores). Options given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import data as data_mod
from .experiments import ALGORITHMS, ConfigError, compare_suite, config_from, run_experiment

log = logging.getLogger("druid_vl")

# (flag, config key, type, help)
RUN_OPTIONS = [
    ("--dataset", "dataset", str, "LIBSVM file, or 'synthetic' for the offline ijcnn1 stand-in (default)"),
    ("--dim", "dim", int, "feature dimension d (default 22)"),
    ("--samples", "samples", int, "number of leading samples to read (default 4000)"),
    ("--agents", "agents", int, "number of agents n (default 10)"),
    ("--er-p", "er_p", float, "Erdos-Renyi edge probability (default 0.2)"),
    ("--seed", "seed", int, "master seed; repeat k uses seed + k (default 0)"),
    ("--rounds", "rounds", int, "global rounds per run (default 200)"),
    ("--algorithm", "algorithm", str, "one of " + ", ".join(ALGORITHMS) + " (default druid-vl)"),
    ("--e-profile", "e_profile", str,
     "work loads: equal:k, uniform:lo,hi, extreme:lo,hi or explicit:E0,E1,... (default equal:10)"),
    ("--p-min", "p_min", str, "participation probability for all agents, or a comma list (default 1.0)"),
    ("--mu-z", "mu_z", float, "consensus penalty (default 5e-5)"),
    ("--mu-theta", "mu_theta", float, "regularizer penalty (default 1e-4)"),
    ("--gamma", "gamma", float, "L1 weight (default 2e-6)"),
    ("--ridge", "ridge", float, "per-sample L2 weight (default 0)"),
    ("--eps", "eps", float, "fixed proximal weight for every agent (default 1e-4)"),
    ("--tune-eps", "tune_eps", str, "'ebar,Ebar,c,zeta': work-load-aware proximal weights (overrides --eps)"),
    ("--bg", "bg", int, "gradient mini-batch size (default 100)"),
    ("--bh", "bh", int, "Hessian mini-batch size (default 100)"),
    ("--gd-step", "gd_step", float, "step of druid-gd (default 1/M from a curvature bound)"),
    ("--inner-model", "inner_model", str, "local gradient: full (default) or anchored"),
    ("--target", "target", float, "relative error target for the summary (default 1e-2)"),
    ("--repeats", "repeats", int, "number of seeded runs (default 5)"),
    ("--diverge-at", "diverge_at", float, "stop a run once its relative error exceeds this"),
    ("--out-dir", "out_dir", str, "output directory (default results)"),
    ("--label", "label", str, "row label in comparison tables"),
]


def _add_run_options(p: argparse.ArgumentParser) -> None:
    for flag, key, typ, text in RUN_OPTIONS:
        p.add_argument(flag, dest=key, type=typ, default=None, help=text)
    p.add_argument("--stop-at-target", dest="stop_at_target", action="store_const", const=True,
                   default=None, help="end each run once the target error is reached")
    p.add_argument("--wall-clock", dest="wall_clock", action="store_const", const=True, default=None,
                   help="record per-round wall time (makes outputs machine dependent)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="druid-vl", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded repeats of one configuration")
    run.add_argument("--config", help="key = value file; command-line options override it")
    _add_run_options(run)

    cmp_ = sub.add_parser("compare", help="run several configurations and tabulate them")
    cmp_.add_argument("configs", nargs="+", help="config files, one per table row")
    cmp_.add_argument("--table", required=True, help="output CSV for the comparison table")
    _add_run_options(cmp_)

    syn = sub.add_parser("synth", help="write the offline ijcnn1 stand-in as LIBSVM")
    syn.add_argument("path")
    syn.add_argument("--samples", type=int, default=4000)
    syn.add_argument("--dim", type=int, default=22)
    syn.add_argument("--seed", type=int, default=data_mod.IJCNN1_LIKE_SEED)
    return ap


def _overrides(args) -> dict:
    keys = [k for _, k, _, _ in RUN_OPTIONS] + ["stop_at_target", "wall_clock"]
    return {k: getattr(args, k) for k in keys}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            data_mod.write_libsvm(data_mod.ijcnn1_like(args.samples, args.dim, args.seed), args.path)
            return 0
        if args.command == "run":
            cfg = config_from(args.config, **_overrides(args))
            s = run_experiment(cfg)
            mean, _, reached = s.stats("rounds")
            log.info("rounds to %g: mean %s over %d/%d runs", cfg.target, mean, reached, s.runs)
            return 0
        over = _overrides(args)
        over.pop("out_dir")
        cfgs = []
        for k, path in enumerate(args.configs):
            cfg = config_from(path, **over)
            if cfg.out_dir == "results":
                # per-configuration runs go next to the table unless the file says otherwise
                cfg = cfg.replace(out_dir=str(Path(args.table).parent / f"cfg{k}"))
            cfgs.append(cfg)
        compare_suite(cfgs, args.table)
        return 0
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"druid-vl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
