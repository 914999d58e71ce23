"""Command line: ``run`` a scenario, ``verify`` a chain dump, ``inspect`` its blocks.

Exit codes: 0 success, 1 invalid chain or failed run, 2 unreadable input or bad config.
"""
import argparse
import os
import sys
from dataclasses import replace
from typing import List, Optional

from pourl import APP_TITLE, __version__
from pourl.config import load_experiment_config
from pourl.errors import ConfigError, DumpFormatError, PourlError
from pourl.hashchain import tip_digest, validate_chain
from pourl.logger import ENV_VAR, Logger, configure_logging
from pourl.persistence import chain_json_lines, load_chain
from pourl.runner import ExperimentRunner

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_run(args: argparse.Namespace) -> int:
    logger = Logger()
    try:
        config = load_experiment_config(args.config, logger.error)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("seed", "must be an unsigned 64-bit integer")
            config = config.with_seed(args.seed)
        if args.out is not None:
            config = replace(config, output_dir=args.out)
        ExperimentRunner(config, logger).run()
    except (ConfigError, DumpFormatError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    except PourlError as exc:
        return _fail(EXIT_FAILURE, f"{type(exc).__name__}: {exc}")
    print(f"OK {config.scenario} -> {config.output_dir}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        chain, oracle = load_chain(args.chain)
    except (DumpFormatError, OSError) as exc:
        return _fail(EXIT_INPUT, f"cannot read {args.chain}: {exc}")
    verdict = validate_chain(chain, oracle)
    if not verdict.ok:
        print(f"INVALID at height {verdict.height}: {type(verdict.error).__name__}: {verdict.error}")
        return EXIT_FAILURE
    print(f"OK {len(chain)} blocks, tip {tip_digest(chain).hex()}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        chain, _ = load_chain(args.chain)
    except (DumpFormatError, OSError) as exc:
        return _fail(EXIT_INPUT, f"cannot read {args.chain}: {exc}")
    if args.json:
        for line in chain_json_lines(chain):
            print(line)
        return EXIT_OK
    for block in chain:
        print(
            f"{block.height:>6}  author={block.author:<4} action={block.action:<10} "
            f"reward={block.reward!r:<8} {block.digest.hex()}"
        )
    return EXIT_OK


def build_cli() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pourl", description=f"{APP_TITLE} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run the scenario named in a config file")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
    p_run.add_argument("--seed", type=int, default=None, help="Seed for simulation and learning (overrides config)")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="Validate a chain dump against the oracle in its header")
    p_verify.add_argument("chain", help="Path to a .chain dump")
    p_verify.set_defaults(func=cmd_verify)

    p_inspect = sub.add_parser("inspect", help="Print one line per block of a chain dump")
    p_inspect.add_argument("chain", help="Path to a .chain dump")
    p_inspect.add_argument("--json", action="store_true", help="Emit JSON lines instead")
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging(os.environ.get(ENV_VAR))
    args = build_cli().parse_args(argv)
    return args.func(args)
