"""Command-line entry point: neuralq gen-mdp | run | sweep | diagnose | oracle | plot."""

import argparse
import logging
from pathlib import Path
import sys
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .harness import ExperimentConfig
from .harness.config import PROBES, load_config, with_seed
from .harness.diagnose import run_diagnostics
from .harness.plots import PlotKind, emit_plots
from .harness.sweep import final_window_mean, run_sweep
from .learning.neural_q import train
from .learning.records import write_run
from .mdp import greedy_actions
from .mdp.mdp_json import load_mdp, random_mdp, save_mdp
from .mdp.oracles import value_iteration
from .utils import ConfigError, NeuralQError, configure_logging, print_summary

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

logger = logging.getLogger(__name__)


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config = with_seed(config, args.seed)
    return config


def _gen_mdp(args) -> int:
    mdp = random_mdp(args.n_states, args.n_actions, args.gamma, args.seed, args.feature_dim)
    path = save_mdp(mdp, args.out or Path("mdp.json"))
    print_summary("MDP generated", states=mdp.n_states, actions=mdp.n_actions, gamma=mdp.gamma, file=str(path))
    return EXIT_OK


def _oracle(args) -> int:
    if args.mdp is not None:
        mdp = load_mdp(args.mdp)
    elif args.config is not None:
        mdp = load_config(args.config).build_mdp()
    else:
        raise ConfigError("oracle needs --mdp or --config")
    q_star = value_iteration(mdp, tol=args.tol)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(q_star, columns=[f"a{a}" for a in range(mdp.n_actions)])
        frame.index.name = "s"
        frame.to_csv(args.out / "q_star.csv", float_format="%.17g")
    print_summary(
        "Optimal action values",
        states=mdp.n_states,
        actions=mdp.n_actions,
        gamma=mdp.gamma,
        v_star=np.array2string(q_star.max(axis=1), precision=6),
        greedy_actions=np.array2string(greedy_actions(q_star)),
    )
    return EXIT_OK


def _run(args) -> int:
    config = _load(args)
    if not config.cells:
        raise ConfigError("run needs a 'sweep' or 'runs' section")
    out_dir = args.out or config.output_dir
    mdp = config.build_mdp()
    policy = config.build_policy(mdp)
    cell_id, cell = config.cell_ids()[0], config.cells[0]
    record = train(config.run_config(cell, mdp), mdp, policy)
    csv_path = write_run(record, out_dir, cell_id, snapshot=True, extra={"config_hash": config.config_hash})
    print_summary(
        "Run complete",
        cell=cell_id,
        eta=f"{record.eta:.6e}",
        omega=f"{record.omega:.6e}",
        final_q_gap_sq=f"{final_window_mean(record.metrics['q_gap_sq']):.6e}",
        wall_time=f"{record.wall_time:.2f}s",
        output=str(csv_path),
    )
    return EXIT_OK


def _sweep(args) -> int:
    config = _load(args)
    result = run_sweep(config, workers=args.workers, output_dir=args.out)
    print_summary(
        "Sweep complete",
        cells=len(result.aggregate),
        failed=result.n_failed,
        config_hash=result.config_hash,
        output=str(result.output_dir),
    )
    return EXIT_PARTIAL if result.n_failed else EXIT_OK


def _diagnose(args) -> int:
    config = _load(args)
    probes = None if args.probe is None else [args.probe]
    _, headline = run_diagnostics(config, probes, args.out)
    print_summary("Diagnostics", **headline)
    return EXIT_OK


def _plot(args) -> int:
    kinds = [PlotKind(kind) for kind in (args.kind or [PlotKind.Q_GAP.value])]
    paths = emit_plots(args.input, args.out or args.input.parent, kinds)
    print_summary("Plots written", files=", ".join(str(p) for p in paths))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuralq", description="Projected neural Q-learning laboratory")
    parser.add_argument("--log-level", default=None, help="Logging level (default: NEURALQ_LOG_LEVEL or WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-mdp", help="Generate a seeded random MDP file")
    gen.add_argument("--n-states", type=int, required=True)
    gen.add_argument("--n-actions", type=int, required=True)
    gen.add_argument("--gamma", type=float, default=0.9)
    gen.add_argument("--feature-dim", type=int, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, default=None, help="Output file (default: mdp.json)")
    gen.set_defaults(handler=_gen_mdp)

    oracle = sub.add_parser("oracle", help="Solve for Q* by value iteration")
    oracle.add_argument("--mdp", type=Path, default=None)
    oracle.add_argument("--config", type=Path, default=None)
    oracle.add_argument("--tol", type=float, default=1e-10)
    oracle.add_argument("--out", type=Path, default=None)
    oracle.set_defaults(handler=_oracle)

    for name, handler, help_text in (
        ("run", _run, "Train the first configured cell"),
        ("sweep", _sweep, "Train every configured cell"),
        ("diagnose", _diagnose, "Run diagnostic probes"),
    ):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("--config", type=Path, required=True)
        command.add_argument("--out", type=Path, default=None)
        command.add_argument("--seed", type=int, default=None, help="Override every run seed")
        if name == "sweep":
            command.add_argument("--workers", type=int, default=None)
        if name == "diagnose":
            command.add_argument("--probe", choices=list(PROBES) + ["all"], default=None)
        command.set_defaults(handler=handler)

    plot = sub.add_parser("plot", help="Render SVG plots from a run or aggregate CSV")
    plot.add_argument("--input", type=Path, required=True)
    plot.add_argument("--kind", choices=[k.value for k in PlotKind], action="append", default=None)
    plot.add_argument("--out", type=Path, default=None)
    plot.set_defaults(handler=_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"File not found: {e.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except NeuralQError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error("%s failed: %s: %s", args.command, type(e).__name__, e)
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
