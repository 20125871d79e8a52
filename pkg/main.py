"""
FFCE Segmenter - Command-Line Entry Point
Builds the argument parser from the command extensions and maps every error
that reaches the command boundary to an exit code.
"""

import argparse
import importlib
import logging
import sys
from typing import List, Optional, Sequence

from core.error_monitor import ErrorContext, UsageError, error_monitor
from utils.log_config import configure_logging
from utils.settings import settings

logger = logging.getLogger(__name__)

PROG = 'ffce'

# Command extensions, loaded in order
EXTENSIONS = (
    'commands.pipeline',
    'commands.evaluation',
)


class CommandLineParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


# DRY Helper Methods
def _load_extensions(subparsers) -> List[str]:
    """Import every command extension and let it register its subcommands"""
    loaded = []
    for name in EXTENSIONS:
        module = importlib.import_module(name)
        module.setup(subparsers)
        loaded.append(name)
        logger.info(f"Successfully loaded {name}")
    return loaded


def build_parser() -> CommandLineParser:
    """Top-level parser with one subcommand per registered command."""
    parser = CommandLineParser(prog=PROG, description='Feature-fused context-encoding segmentation')
    parser.add_argument('--log-level', default=None, help='override FFCE_LOG_LEVEL')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True
    _load_extensions(subparsers)
    return parser


def cli_run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.

    Args:
        argv: Arguments without the program name; defaults to sys.argv[1:]

    Returns:
        0 on success, 1 on usage or configuration errors, 2 on data,
        shape, validation, numerical or internal errors
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    configure_logging(settings.log_level)
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        if args.log_level:
            configure_logging(args.log_level)
        logger.debug(f"Running {command} with {vars(args)}")
        return int(args.handler(args) or 0)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0
    except KeyboardInterrupt:
        print(f"{PROG}: interrupted", file=sys.stderr)
        return 2
    except Exception as e:
        record = error_monitor.record_error(e, ErrorContext(command_name=command, operation='cli_run'))
        prefix = f"{PROG} {command}" if command else PROG
        print(f"{prefix}: error: {e}", file=sys.stderr)
        return record.exit_code


if __name__ == "__main__":
    sys.exit(cli_run())
