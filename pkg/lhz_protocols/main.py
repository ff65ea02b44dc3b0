"""
LHZ Protocol Workbench - Main Entry Point

Runs the pipeline stages (sample, spectra, group, optimize, evaluate,
speedup, library) or all of them in order.
"""

import os
import sys
import time
import argparse
from pathlib import Path
from typing import List, Optional

from .config import RunConfig, load_config
from .errors import LhzError
from .logging_config import setup_logging, get_logger
from .pipeline import COMMANDS, STAGES, RunPaths
from .utils.timing import format_duration

logger = get_logger(__name__)


def _load_local_env() -> None:
    """Load environment variables from ./.env if present."""
    env_path = Path.cwd() / '.env'
    if not env_path.exists():
        return

    for raw_line in env_path.read_text().splitlines():
        line = raw_line.strip()
        if not line or line.startswith('#') or '=' not in line:
            continue
        key, value = line.split('=', 1)
        os.environ.setdefault(key.strip(), value.strip())


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help='JSON config file')
    common.add_argument('--seed', type=int, help='Master seed (or set LHZ_SEED)')
    common.add_argument('--profile', choices=('desk', 'paper'), help='Preset (or set LHZ_PROFILE)')
    common.add_argument('--out', type=str, help='Run directory (or set LHZ_OUT)')
    common.add_argument('--workers', type=int, help='Worker processes (or set LHZ_WORKERS)')
    common.add_argument('--overwrite', action='store_true', help='Replace existing artifacts')
    common.add_argument('--debug', action='store_true', help='Enable debug logging')

    parser = argparse.ArgumentParser(
        description='LHZ Protocol Workbench - optimized annealing protocols for parity-encoded spin glasses'
    )
    commands = parser.add_subparsers(dest='command', required=True)
    for stage in STAGES:
        commands.add_parser(stage, parents=[common], help=COMMANDS[stage].__doc__)
    commands.add_parser('all', parents=[common], help='Run every stage in order')

    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {'seed': args.seed, 'output_dir': args.out, 'workers': args.workers}
    if args.debug:
        overrides['debug'] = True
    return overrides


def run(args: argparse.Namespace) -> int:
    """Load configuration and run the requested stages; returns the exit code."""
    try:
        cfg: RunConfig = load_config(args.profile, args.config, _overrides(args))
    except LhzError as e:
        setup_logging('config', args.debug)
        for problem in getattr(e, 'problems', [str(e)]):
            logger.error(f'Config: {problem}')
        return e.exit_code

    paths = RunPaths(Path(cfg.output_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    stages = STAGES if args.command == 'all' else (args.command,)

    for stage in stages:
        setup_logging(stage, cfg.debug, str(paths.log))
        logger.info('=' * 60)
        logger.info(f'Stage {stage} | profile {cfg.profile} | config {cfg.config_hash()}')
        logger.info(f'Output: {paths.root}')
        logger.info('=' * 60)
        started = time.monotonic()
        try:
            status = COMMANDS[stage](cfg, overwrite=args.overwrite)
        except LhzError as e:
            logger.error(f'{type(e).__name__}: {e}')
            return e.exit_code
        logger.info(f'Stage {stage} finished in {format_duration(time.monotonic() - started)}')
        if status != 0:
            return status

    return 0


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point."""
    _load_local_env()
    args = parse_args(argv)

    try:
        code = run(args)
    except KeyboardInterrupt:
        logger.info('Received keyboard interrupt, shutting down...')
        code = 130
    except Exception as e:
        logger.error(f'Fatal error: {e}', exc_info=True)
        code = 1
    sys.exit(code)


if __name__ == '__main__':
    main()
