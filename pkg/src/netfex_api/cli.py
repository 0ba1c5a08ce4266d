"""``netfex`` command line: ``gen | search | robustness | bench-rbm``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from netfex_api.core.telemetry import setup_logging, setup_opentelemetry
from netfex_api.core.utils import read_json
from netfex_api.models.run_config import RunConfig
from netfex_api.services.experiments import cmd_bench_rbm, cmd_gen, cmd_robustness, cmd_search
from netfex_lib.exceptions import NetfexError, NumericError
from pathlib import Path
from pydantic import ValidationError
from typing import Any

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def load_config(args: argparse.Namespace) -> RunConfig:
    """Validated RunConfig from ``--config`` (defaults when omitted) with flag overrides applied."""
    payload = read_json(args.config) if args.config is not None else {}
    cfg = RunConfig.model_validate(payload)
    return cfg.with_overrides(seed=args.seed, out=args.out, threads=args.threads)


def _gen(args: argparse.Namespace) -> Any:
    return cmd_gen(load_config(args))


def _search(args: argparse.Namespace) -> Any:
    return cmd_search(load_config(args), resume=args.resume)


def _robustness(args: argparse.Namespace) -> Any:
    return cmd_robustness(load_config(args))


def _bench(args: argparse.Namespace) -> Any:
    return cmd_bench_rbm(load_config(args))


def _add_common(parser: argparse.ArgumentParser, func: Callable[[argparse.Namespace], Any]) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    parser.add_argument("--out", type=Path, default=None, help="Run directory (default: NETFEX_RUNS_DIR/<command>)")
    parser.add_argument("--seed", type=int, default=None, help="Root seed, overrides the config")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: NETFEX_THREADS)")
    parser.set_defaults(func=func)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netfex", description="Discover network dynamics with finite expressions")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("gen", help="Simulate a preset system and write graph and series"), _gen)
    search = sub.add_parser("search", help="Search expressions for every output dimension")
    _add_common(search, _search)
    search.add_argument("--resume", action="store_true", help="Continue from the checkpoints in --out")
    _add_common(sub.add_parser("robustness", help="Downsampling, noise and link-perturbation sweeps"), _robustness)
    _add_common(sub.add_parser("bench-rbm", help="Time full versus random-batch interactions"), _bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    setup_opentelemetry("cli")
    if args.threads is not None and args.threads < 1:
        logger.error(f"❌ --threads must be positive, got {args.threads}")
        return EXIT_CONFIG
    try:
        args.func(args)
    except ValidationError as err:
        logger.error(f"❌ Invalid configuration:\n{err}")
        return EXIT_CONFIG
    except NumericError as err:
        logger.error(f"💥 Numeric failure: {err}")
        return EXIT_NUMERIC
    except (ValueError, NetfexError) as err:
        logger.error(f"❌ {err}")
        return EXIT_CONFIG
    except OSError as err:
        logger.error(f"❌ I/O error: {err}")
        return EXIT_IO
    logger.info(f"✅ {args.command} completed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
