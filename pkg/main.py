#!/usr/bin/env python3
"""
RLDDU Main Entry Point
CLI for experiment runs, policy training, complexity reports and self-tests.
"""

import argparse
import sys

from dotenv import load_dotenv
from pydantic import ValidationError

load_dotenv()

from rlddu.core.errors import ConfigError, RldduError  # noqa: E402
from rlddu.core.orchestrator import ExperimentOrchestrator  # noqa: E402
from rlddu.utils.config import load_config  # noqa: E402
from rlddu.utils.logger import configure_logging, get_logger  # noqa: E402

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def print_section(title: str):
    """Print a section header."""
    print(f"\n{'=' * 60}")
    print(f"  {title}")
    print(f"{'=' * 60}\n")


def cmd_run(orchestrator: ExperimentOrchestrator) -> int:
    report = orchestrator.run()
    print_section("Mean EWSR per algorithm")
    for algorithm in orchestrator.config.algorithms:
        rows = report.by_algorithm(algorithm)
        mean = sum(row.ewsr for row in rows) / len(rows)
        print(f"  {algorithm:<12} {mean:12.4f}  ({len(rows)} rows)")
    print(f"\n✓ Results written to {orchestrator.out_dir}")
    return 0


def cmd_train(orchestrator: ExperimentOrchestrator) -> int:
    result = orchestrator.train()
    print_section("Training")
    print(f"  Episodes:            {len(result.trace)}")
    print(f"  Skipped steps:       {sum(row.skipped for row in result.trace)}")
    print(f"  Reward improvement:  {result.improvement():+.4f}")
    print(f"\n✓ Checkpoint and traces written to {orchestrator.out_dir}")
    return 0


def cmd_flops(orchestrator: ExperimentOrchestrator) -> int:
    rows = orchestrator.flops()
    print_section("Complexity")
    for algo, module, op, count, formula_value in rows:
        if module == "formula" and op == "total":
            print(f"  {algo:<10} {formula_value}")
    print(f"\n✓ {len(rows)} rows written to {orchestrator.out_dir}")
    return 0


def cmd_selftest(orchestrator: ExperimentOrchestrator) -> int:
    checks = orchestrator.selftest()
    print_section("Self-test")
    for check in checks:
        print(f"  {'PASS' if check.passed else 'FAIL'}  {check.name:<26} {check.detail}")
    return 0 if all(check.passed for check in checks) else EXIT_RUNTIME


COMMANDS = {
    "run": cmd_run,
    "train": cmd_train,
    "flops": cmd_flops,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="RLDDU - robust unfolded WMMSE precoding simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Block-aging sweep
  python main.py run --config configs/block_sweep.env --threads 4

  # Train a policy, then evaluate it
  python main.py train --config configs/train_small.env --out output/policy
  python main.py run --config configs/block_sweep_rlddu.env

  # Table of complexity estimates plus measured kernel counts
  python main.py flops --config configs/reference_scale.env --instrument-flops
        """,
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="What to run")
    parser.add_argument("--config", type=str, help="Flat key=value experiment config")
    parser.add_argument("--seed", type=int, help="Base scenario seed (overrides the config)")
    parser.add_argument("--out", type=str, help="Output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads for the run grid (default: 1)")
    parser.add_argument(
        "--instrument-flops",
        action="store_true",
        help="Count multiply-accumulates of the numerical kernels",
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: WARNING)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main CLI entry point."""
    args = build_parser().parse_args(argv)
    configure_logging(log_level=args.log_level)
    logger = get_logger(__name__, command=args.command)

    try:
        config = load_config(args.config, overrides={"seed": args.seed, "out_dir": args.out})
        orchestrator = ExperimentOrchestrator(config, threads=args.threads, instrument=args.instrument_flops)
    except (ConfigError, ValidationError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return COMMANDS[args.command](orchestrator)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RldduError, ValidationError, OSError, ValueError) as e:
        logger.exception("command_failed", error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
