import argparse
import logging
import os
import sys

import numpy as np

from config import LOG_LEVEL, RESULTS_DIR, TOP_K, WORKERS
from formatter import REPORT_COLUMNS, RecordFormatter, build_report, format_table, write_csv
from metrics import FaultModel, analytic_fault_accuracy, fault_sim
from run_manager import RunSession, load_manifest_config, run_multi_seed, run_toy_seeds
from schemas import ConfigError, load_experiment_config, load_toy_config

# Setup logging
logging.basicConfig(
    level=LOG_LEVEL,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_CONFIG = 2

# CLI flag -> dotted config key
SAMPLER_FLAGS = {
    "sampler": "sampler.strategy",
    "grad_steps": "sampler.grad_steps",
    "p": "sampler.mixing_p",
    "pivot_mode": "sampler.pivot_mode",
    "fill_mode": "sampler.fill_mode",
    "per_alpha": "sampler.per_alpha",
    "per_beta": "sampler.per_beta",
}
RUN_FLAGS = {
    "env": "env",
    "episodes": "episodes",
    "seed": "seed",
    "seeds": "seeds",
    "gamma": "gamma",
    "buffer_capacity": "buffer_capacity",
    "eval_window": "eval_window",
    "log_indices": "log_indices",
    "dump_td_every": "dump_td_every",
    "record_wall_clock": "record_wall_clock",
    "export_params": "export_params",
    "agent_kind": "agent.kind",
    "lr": "agent.lr",
    "hidden_sizes": "agent.hidden_sizes",
    **SAMPLER_FLAGS,
}
TOY_FLAGS = {
    "env": "env",
    "epochs": "epochs",
    "buffer_size": "buffer_size",
    "lr": "lr",
    "gamma": "gamma",
    "eval_epsilon": "eval_epsilon",
    "rescore_every": "rescore_every",
    "seed": "seed",
    "seeds": "seeds",
    **SAMPLER_FLAGS,
}


def collect_overrides(args, flags: dict) -> dict:
    return {key: getattr(args, name) for name, key in flags.items() if getattr(args, name, None) is not None}


def _run_configs(args) -> list:
    """(config, seeds) pairs, one per batch size of a sweep."""
    if args.from_manifest:
        config, seeds = load_manifest_config(args.from_manifest)
        return [(config, seeds)]

    overrides = collect_overrides(args, RUN_FLAGS)
    batch_sizes = args.batch_size or [None]
    configs = []
    for batch_size in batch_sizes:
        if batch_size is not None:
            overrides["sampler.batch_size"] = batch_size
        config = load_experiment_config(args.config, overrides)
        configs.append((config, config.seed_list()))
    return configs


def cmd_run(args) -> int:
    """Online runs, one output directory per configuration."""
    # every configuration validates before anything is written
    configs = _run_configs(args)

    exit_code = EXIT_OK
    for config, seeds in configs:
        session = RunSession("run", args.output_dir)
        session.start(config.model_dump(mode="json"), seeds, sampler=config.sampler.label)

        try:
            records = run_multi_seed(config, seeds, workers=args.workers)
            formatter = RecordFormatter(config.eval_window)
            for record in records:
                session.add_outputs(formatter.write_run(record, session.output_dir))
        except Exception:
            session.cleanup()
            raise

        diverged = [r.seed for r in records if r.diverged]
        session.finalize(
            status="diverged" if diverged else "ok",
            diverged_seeds=diverged,
            warmup_episodes={str(r.seed): r.warmup_episodes for r in records},
        )
        if diverged:
            logger.error(f"Seeds {diverged} diverged; see {session.manifest_path}")
            exit_code = EXIT_DIVERGED
        print(session.output_dir)
    return exit_code


def cmd_toy(args) -> int:
    """Offline GridWorld study: sampled-state frequencies and greedy rollouts per seed."""
    overrides = collect_overrides(args, TOY_FLAGS)
    if args.batch_size:
        overrides["sampler.batch_size"] = args.batch_size
    config = load_toy_config(overrides)
    seeds = config.seed_list()

    session = RunSession("toy", args.output_dir)
    session.start(config.model_dump(mode="json"), seeds, sampler=config.sampler.label)

    try:
        records = run_toy_seeds(config, seeds, workers=args.workers)
        for record in records:
            session.add_outputs(RecordFormatter.write_toy(record, session.output_dir))
        session.add_outputs(RecordFormatter.write_rollouts(records, session.output_dir))
    except Exception:
        session.cleanup()
        raise

    session.finalize(
        reached_goal=sum(r.reached_goal for r in records),
        interior_gaps=sum(r.has_interior_gap() for r in records),
    )
    for record in records:
        print(f"seed {record.seed}: reached goal={record.reached_goal}, interior gap={record.has_interior_gap()}")
    print(session.output_dir)
    return EXIT_OK


def cmd_faultsim(args) -> int:
    """Monte-Carlo comparison of the Top-K and average metrics under faults."""
    fields = {
        "gaussian_sigma": args.sigma,
        "environments": args.environments,
        "seeds_per_env": args.seeds_per_env,
        "trials": args.trials,
        "k": args.k,
    }
    if args.fault_probability is not None:
        fields["algorithms"] = tuple((v, args.fault_probability) for v, _ in FaultModel().algorithms)
    try:
        model = FaultModel(**fields)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    session = RunSession("faultsim", args.output_dir)
    session.start(model.model_dump(mode="json"), [args.seed])

    topk, average = fault_sim(model, np.random.default_rng(args.seed))
    analytic = analytic_fault_accuracy(model) if model.gaussian_sigma == 0 else None
    session.add_outputs(RecordFormatter.write_accuracy(session.output_dir, topk, average, analytic))
    session.finalize()

    print(f"top-k accuracy:   {topk:.4f}" + (f"  (exact {analytic[0]:.4f})" if analytic else ""))
    print(f"average accuracy: {average:.4f}" + (f"  (exact {analytic[1]:.4f})" if analytic else ""))
    print(session.output_dir)
    return EXIT_OK


def cmd_report(args) -> int:
    """Top-K summary table over finished run directories."""
    rows = build_report(args.run_dirs, args.k)

    session = RunSession("report", args.output_dir)
    session.start({"run_dirs": list(args.run_dirs), "k": args.k}, [])
    session.add_outputs(write_csv(os.path.join(session.output_dir, "report.csv"), REPORT_COLUMNS, rows))
    session.finalize()

    print(format_table(rows))
    print(session.output_dir)
    return EXIT_OK


def _add_sampler_flags(parser, batch_nargs=None):
    parser.add_argument("--sampler", choices=["uer", "rer", "oer", "per", "ier"])
    parser.add_argument("--batch-size", type=int, nargs=batch_nargs,
                        help="Buffer batch size B" + (" (several values run a sweep)" if batch_nargs else ""))
    parser.add_argument("--grad-steps", type=int, help="Gradient steps G per epoch")
    parser.add_argument("--p", type=float, help="Mixing fraction of uniform batches (IER)")
    parser.add_argument("--pivot-mode", choices=["td_top", "uniform"])
    parser.add_argument("--fill-mode", choices=["look_back", "look_forward", "uniform"])
    parser.add_argument("--per-alpha", type=float)
    parser.add_argument("--per-beta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Experience-replay sampling workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=RESULTS_DIR, help="Parent directory for session output")

    run = sub.add_parser("run", parents=[common], help="Online runs over one or more seeds")
    run.add_argument("--config", help="key=value experiment file")
    run.add_argument("--from-manifest", help="Re-run the config and seeds of an earlier run manifest")
    run.add_argument("--env", choices=["gridworld", "cartpole"])
    run.add_argument("--agent-kind", choices=["tabular", "dqn"])
    run.add_argument("--episodes", type=int)
    run.add_argument("--seed", type=int, help="First seed")
    run.add_argument("--seeds", type=int, help="Number of consecutive seeds")
    run.add_argument("--gamma", type=float)
    run.add_argument("--lr", type=float)
    run.add_argument("--hidden-sizes", help="Comma-separated hidden layer widths")
    run.add_argument("--buffer-capacity", type=int)
    run.add_argument("--eval-window", type=int)
    run.add_argument("--dump-td-every", type=int, help="Write TD/surprise diagnostics every N episodes")
    run.add_argument("--log-indices", action="store_true", default=None)
    run.add_argument("--record-wall-clock", action="store_true", default=None)
    run.add_argument("--export-params", action="store_true", default=None,
                     help="Write each seed's final DQN parameters to seed_<s>_params.txt")
    run.add_argument("--workers", type=int, default=WORKERS)
    _add_sampler_flags(run, batch_nargs="+")
    run.set_defaults(handler=cmd_run)

    toy = sub.add_parser("toy", parents=[common], help="Offline GridWorld sampling study")
    toy.add_argument("--env", choices=["gridworld", "cartpole"])
    toy.add_argument("--epochs", type=int)
    toy.add_argument("--buffer-size", type=int)
    toy.add_argument("--lr", type=float)
    toy.add_argument("--gamma", type=float)
    toy.add_argument("--eval-epsilon", type=float)
    toy.add_argument("--rescore-every", type=int, help="Epochs between TD-score snapshots")
    toy.add_argument("--seed", type=int)
    toy.add_argument("--seeds", type=int)
    toy.add_argument("--workers", type=int, default=WORKERS)
    _add_sampler_flags(toy)
    toy.set_defaults(handler=cmd_toy)

    faultsim = sub.add_parser("faultsim", parents=[common], help="Top-K vs average metric under faults")
    faultsim.add_argument("--trials", type=int, default=500)
    faultsim.add_argument("--environments", type=int, default=20)
    faultsim.add_argument("--seeds-per-env", type=int, default=10)
    faultsim.add_argument("--k", type=int, default=TOP_K)
    faultsim.add_argument("--sigma", type=float, default=0.0)
    faultsim.add_argument("--fault-probability", type=float)
    faultsim.add_argument("--seed", type=int, default=0)
    faultsim.set_defaults(handler=cmd_faultsim)

    report = sub.add_parser("report", parents=[common], help="Top-K table over run directories")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--k", type=int, default=TOP_K)
    report.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (ValueError, KeyError, OSError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
