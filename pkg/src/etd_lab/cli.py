"""``etd-lab`` command line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys

from . import experiments
from .config import Config, load_config, problem_from_config
from .errors import ConfigError, EtdLabError, NonIrreducibleChain, NumericalDivergence, SingularSystem
from .sim import SimConfig

log = logging.getLogger("etd_lab")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
FULL_SCALE_RUNS = 10_000
DESK_SCALE_RUNS = 500


def format_value(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, float) or hasattr(x, "dtype"):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def render_table(rows):
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(rows[0]))
    for row in rows:
        writer.writerow([format_value(v) for v in row.values()])
    return buf.getvalue()


def render_report(report):
    return render_table([{"key": k, "value": v} for k, v in report.items()])


def _grid(cfg, key, default):
    grid = cfg.get(key, kind=list)
    if grid is None:
        return list(default)
    if not grid:
        raise cfg.error(key, "grid must not be empty")
    return grid


def cmd_kolter_bias(cfg, args):
    rows = experiments.kolter_bias(
        cfg.get("gamma", 0.99), cfg.get("epsilon", 0.001), _grid(cfg, "p_grid", experiments.KOLTER_P_GRID))
    return render_table(rows)


def cmd_beta_sweep(cfg, args):
    defaults = {"gamma": 0.9, "epsilon": 0.2, "p": 0.95}
    for key, value in defaults.items():
        if key not in cfg:
            cfg = cfg.merged(**{key: value})
    problem = problem_from_config(cfg, default="kolter2")
    runs = cfg.get("runs", DESK_SCALE_RUNS, kind=int)
    if args.full_scale:
        runs = FULL_SCALE_RUNS
    try:
        sim = SimConfig(alpha=cfg.get("alpha", 0.001), n_steps=cfg.get("steps", 10_000, kind=int),
                        n_runs=runs, seed=cfg.get("seed", 0, kind=int))
    except ValueError as exc:
        raise ConfigError(str(exc), None, cfg.source) from None
    result = experiments.beta_sweep(problem, _grid(cfg, "beta_grid", experiments.SWEEP_BETAS), sim,
                                    lam=cfg.get("lambda", 0.0), threads=args.threads)
    for a in result.aggregates:
        log.info("beta=%s mean_error=%s diverged=%d", a.beta, a.mean_error, a.n_diverged)
    return render_table(experiments.sweep_rows(result))


def cmd_example1(cfg, args):
    return render_report(experiments.example1_report(
        cfg.get("epsilon", 0.01), cfg.get("beta", 0.9), cfg.get("gamma", 0.9)))


def cmd_example2(cfg, args):
    checkpoints = [int(c) for c in _grid(cfg, "checkpoints", experiments.EXAMPLE2_CHECKPOINTS)]
    return render_report(experiments.example2_report(
        cfg.get("beta", 0.6), cfg.get("gamma", 0.9), checkpoints, cfg.get("seed", 0, kind=int)))


def cmd_moduli_surface(cfg, args):
    return render_table(experiments.moduli_surface(
        cfg.get("gamma", 0.99),
        _grid(cfg, "lambda_grid", experiments.SURFACE_LAMBDAS),
        _grid(cfg, "beta_grid", experiments.SURFACE_BETAS)))


def cmd_custom(cfg, args):
    if args.config is None:
        raise ConfigError("custom requires --config")
    problem = problem_from_config(cfg, default=None)
    return render_table(experiments.custom_report(
        problem, _grid(cfg, "beta_grid", [problem.mdp.gamma]), cfg.get("lambda", 0.0)))


COMMANDS = {
    "kolter-bias": (cmd_kolter_bias, "standard TD vs ETD bias over behavior policies (CSV)"),
    "beta-sweep": (cmd_beta_sweep, "ETD(0, beta) mean error over a beta grid (CSV)"),
    "example1": (cmd_example1, "tightness example report"),
    "example2": (cmd_example2, "infinite-variance example report"),
    "moduli-surface": (cmd_moduli_surface, "ETD(lam, beta) contraction moduli grid (CSV)"),
    "custom": (cmd_custom, "fixed-point bias table for a configured MDP (CSV)"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="etd-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="YAML config (model and experiment keys)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
        p.add_argument("--full-scale", action="store_true", help="use the full 10,000-run sweep")
        p.add_argument("--threads", type=int, help="worker threads (default: $ETD_LAB_THREADS or CPU count)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config) if args.config else Config({})
        if args.seed is not None:
            cfg = cfg.merged(seed=args.seed)
        text = handler(cfg, args)
    except ConfigError as exc:
        print(f"etd-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystem, NumericalDivergence, NonIrreducibleChain) as exc:
        print(f"etd-lab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EtdLabError as exc:
        print(f"etd-lab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
