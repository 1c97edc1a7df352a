import argparse
import logging
import sys
from typing import List, Optional

from fedloss_sim.server import FEDLOSS_OUTPUT_DIR, default_workers, mcp
from fedloss_sim import tools
from fedloss_sim.simulation import (
    SimulationError,
    apply_overrides,
    parse_config,
    rounds_to_target,
    run_experiment,
)

logger = logging.getLogger("fedloss_sim")


def _parse_seeds(value: str) -> List[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedloss-sim",
        description="Simulate FedAvg, FedProx and FedLoss on an imbalanced synthetic cohort",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run an experiment from a config file")
    run.add_argument("--config", required=True, help="TOML or JSON experiment config")
    run.add_argument(
        "--out",
        default=None,
        help="Output directory (overrides FEDLOSS_OUTPUT_DIR and the config's output_dir)",
    )
    run.add_argument("--seeds", type=_parse_seeds, default=None, help="Comma-separated seeds, e.g. 1,2,3")
    run.add_argument("--strategy", choices=["fedavg", "fedprox", "fedloss"], default=None)
    run.add_argument("--setting", choices=["randomly", "chronologically"], default=None)
    run.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Threads executing clients within a round (default: FEDLOSS_WORKERS or config)",
    )

    target = subparsers.add_parser("rounds-to-target", help="First round a trace reaches a metric target")
    target.add_argument("trace", help="Trace CSV written by 'run'")
    target.add_argument("--metric", default="auc", help="Metric column (default: auc)")
    target.add_argument("--target", type=float, required=True)

    serve = subparsers.add_parser("serve", help="Expose the simulator as MCP tools")
    serve.add_argument(
        "--transport",
        type=str,
        choices=["stdio", "sse", "streamable-http"],
        default="stdio",
        help="Transport method for MCP (default: stdio)",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger("fedloss_sim").setLevel(logging.DEBUG)

    if args.command == "serve":
        mcp.run(transport=args.transport)
        return 0

    try:
        if args.command == "rounds-to-target":
            found = rounds_to_target(args.trace, args.metric, args.target)
            print("none" if found is None else found)
            return 0

        cfg = parse_config(args.config)
        workers = args.workers if args.workers is not None else default_workers()
        cfg = apply_overrides(
            cfg,
            output_dir=args.out or FEDLOSS_OUTPUT_DIR,
            seeds=args.seeds,
            strategy=args.strategy,
            setting=args.setting,
            workers=workers,
        )
        return run_experiment(cfg)
    except (SimulationError, OSError) as e:
        logger.error(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
