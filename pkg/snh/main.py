import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .commands import data as data_commands
from .commands import evaluation as evaluation_commands
from .commands import model as model_commands
from .commands import paramselect as paramselect_commands
from .config import settings
from .errors import EXIT_OK, EXIT_RUNTIME_ERROR, SnhError

logger = logging.getLogger(__name__)

COMMAND_GROUPS = (data_commands, model_commands, evaluation_commands, paramselect_commands)


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=settings.log_format,
        stream=sys.stderr,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snh", description="Differentially private spatial range count release with neural histograms"
    )
    parser.add_argument("--log-level", default=None, help="overrides SNH_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for group in COMMAND_GROUPS:
        group.register(subparsers)
    return parser


def _fail(body: dict, exit_code: int) -> int:
    print(json.dumps(body, default=str), file=sys.stderr)
    return exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        args.handler(args)
    except SnhError as exc:
        logger.error(f"{exc.code}: {exc.detail}")
        return _fail(exc.to_dict(), exc.exit_code)
    except Exception as exc:
        logger.exception(f"Command {args.command} failed")
        return _fail({"error": {"code": "INTERNAL_ERROR", "detail": str(exc)}}, EXIT_RUNTIME_ERROR)
    return EXIT_OK
