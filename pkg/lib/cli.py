import argparse
import importlib
import logging
import os
import sys
from typing import Callable, List, Optional, Sequence

from lib.config import CONFIG_FIELDS, ExperimentConfig, resolve_config
from lib.utils import SindygError, UsageError

_log = logging.getLogger(__name__)

Handler = Callable[["SindygCLI", argparse.Namespace], Optional[int]]


def verbosity_level(argv: Sequence[str]) -> Optional[int]:
    """Log level asked for by ``-v`` / ``-q`` ahead of the command name, or
    None. Read before the parser exists so command loading is logged too."""
    for arg in argv:
        if not arg.startswith("-"):
            break
        if arg in ("-v", "--verbose"):
            return logging.DEBUG
        if arg in ("-q", "--quiet"):
            return logging.WARNING
    return None


class _Parser(argparse.ArgumentParser):
    """argparse reports usage problems through UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}", f"{self.prog}: {message}")


class SindygCLI:
    def __init__(self, command_folder: str = "commands", base_dir: Optional[str] = None):
        self.command_folder = command_folder
        # Repository root; command modules import as "<command_folder>.<name>" from here.
        self.base_dir = base_dir or os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        self.parser = _Parser(
            prog="sindyg",
            description="Graph-informed sparse identification of coupled oscillator dynamics.",
        )
        verbosity = self.parser.add_mutually_exclusive_group()
        verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
        self.subparsers = self.parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
        self.commands: List[str] = []

    # ==================== REGISTRATION ====================

    def add_command(self, name: str, help: str, handler: Optional[Handler] = None,
                    parent=None) -> argparse.ArgumentParser:
        """Register a subcommand (under ``parent``'s subparsers if given)."""
        subparsers = parent if parent is not None else self.subparsers
        parser = subparsers.add_parser(name, help=help, description=help)
        if handler is not None:
            parser.set_defaults(handler=handler)
        if parent is None:
            self.commands.append(name)
        return parser

    def load_commands(self) -> None:
        modules = sorted(m for m in os.listdir(os.path.join(self.base_dir, self.command_folder))
                         if m.endswith(".py") and not m.startswith("_"))
        for module in modules:
            name = f"{self.command_folder}.{module[:-3]}"
            importlib.import_module(name).setup(self)
            _log.debug("Loaded %s", name)

    # ==================== SHARED OPTIONS ====================

    @staticmethod
    def add_config_option(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", help="flat YAML file of option values (flags win)")

    @staticmethod
    def add_solver_options(parser: argparse.ArgumentParser) -> None:
        g = parser.add_argument_group("solver")
        g.add_argument("--lambda", dest="lam", type=float, help="ridge strength")
        g.add_argument("--eta", type=float, help="STLSQ threshold")
        g.add_argument("--penalty-L", dest="L", type=float, help="penalty sharpness L")
        g.add_argument("--max-iters", dest="max_iters", type=int, help="threshold iterations")
        g.add_argument("--f-floor", dest="f_floor", type=float, help="lower clamp on the penalty")
        g.add_argument("--degree", type=int, help="polynomial library degree")
        g.add_argument("--normalize-columns", dest="normalize_columns", action="store_const", const=True,
                       help="scale library columns to unit norm before fitting")

    @staticmethod
    def add_protocol_options(parser: argparse.ArgumentParser) -> None:
        g = parser.add_argument_group("protocol")
        g.add_argument("--seed", type=int, help="base seed (env SINDYG_SEED)")
        g.add_argument("--out-dir", dest="out_dir", help="output directory (env SINDYG_OUT_DIR)")
        g.add_argument("--dt", type=float, help="integration step")
        g.add_argument("--t-end", dest="t_end", type=float, help="training trajectory length")
        g.add_argument("--test-length", dest="test_t_end", type=float,
                       help="test trajectory length (defaults to --t-end)")
        g.add_argument("--n-test", dest="n_test", type=int, help="test trajectories per run")
        g.add_argument("--ic-range", dest="ic_range", help="initial-condition range 'lo,hi'")

    def experiment_config(self, args: argparse.Namespace) -> ExperimentConfig:
        flags = {k: v for k, v in vars(args).items() if k in CONFIG_FIELDS}
        return resolve_config(flags, getattr(args, "config", None))

    # ==================== DISPATCH ====================

    def parse(self, argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
        args = self.parser.parse_args(argv)
        if getattr(args, "handler", None) is None:
            raise UsageError("no command given", f"choose a command: {', '.join(self.commands)}")
        return args

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """Parse and dispatch. Returns the process exit code."""
        try:
            args = self.parse(argv)
        except SystemExit as e:
            # --help / --version
            return int(e.code or 0)
        except SindygError as e:
            print(f"error: {e.user_message}", file=sys.stderr)
            self.parser.print_usage(sys.stderr)
            return e.exit_code

        try:
            code = args.handler(self, args)
            return int(code or 0)
        except SindygError as e:
            _log.error("%s failed: %s", args.command, e)
            print(f"error: {e.user_message}", file=sys.stderr)
            return e.exit_code
        except Exception as e:
            _log.error("Unhandled error in command %r: %s", args.command, e, exc_info=e)
            print("error: unexpected failure (see log for the traceback)", file=sys.stderr)
            return 3
