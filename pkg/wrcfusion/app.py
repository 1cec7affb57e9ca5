"""
Command Host
Discovers command modules, parses the command line, configures logging and
dispatches to the selected command.
"""

import argparse
import importlib
import logging
import pkgutil
import sys
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from dotenv import load_dotenv

from utils.handle_command_error import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, handle_command_error
from utils.logging_config import log_command_usage, setup_logging
from wrcfusion.config import RunConfig, load_config
from wrcfusion.errors import InternalError

COMMANDS_PACKAGE = "commands"


@dataclass
class Command:
    """
    Attributes:
        name: Sub-command word on the command line.
        help: One-line description.
        run: Callable(app, cfg, args) returning an exit code.
        configure: Optional hook adding command-specific arguments.
    """

    name: str
    help: str
    run: Callable[["FusionApp", RunConfig, argparse.Namespace], int]
    configure: Optional[Callable[[argparse.ArgumentParser], None]] = None


class FusionApp:
    """Registry of commands plus the shared run state handed to them."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.commands: Dict[str, Command] = {}
        self.config: Optional[RunConfig] = None
        self.config_path: Optional[str] = None

    def add_command(self, command: Command) -> None:
        if command.name in self.commands:
            raise ValueError(f"command {command.name!r} registered twice")
        self.commands[command.name] = command

    def load_commands(self, package: str = COMMANDS_PACKAGE, strict: Optional[bool] = None) -> List[str]:
        """
        Import every module of `package` and call its setup(app).

        A module that fails to import is logged with its traceback. In strict
        mode (the default for the built-in commands package) the failure is
        raised as an InternalError instead of dropping the command.
        """
        if strict is None:
            strict = package == COMMANDS_PACKAGE
        loaded = []
        pkg = importlib.import_module(package)
        for info in sorted(pkgutil.iter_modules(pkg.__path__), key=lambda m: m.name):
            if info.name.startswith("_"):
                continue
            try:
                module = importlib.import_module(f"{package}.{info.name}")
                module.setup(self)
            except Exception as e:
                self.logger.error("Failed to load command module %s: %s", info.name, e, exc_info=True)
                if strict:
                    raise InternalError(f"command module {package}.{info.name} failed to load: {e}") from e
                continue
            loaded.append(info.name)
            self.logger.debug("Loaded command module: %s", info.name)
        return loaded

    @handle_command_error
    def _load_commands(self) -> int:
        self.load_commands()
        return EXIT_OK

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="wrcfusion", description="Wavelet radar-camera fusion detector")
        sub = parser.add_subparsers(dest="command", metavar="<command>")
        sub.required = True
        for name in sorted(self.commands):
            command = self.commands[name]
            cmd_parser = sub.add_parser(name, help=command.help, description=command.help)
            cmd_parser.add_argument("--config", metavar="PATH", default=None, help="key = value run file")
            cmd_parser.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                                    help="override one config key (repeatable)")
            cmd_parser.add_argument("-v", "--verbose", action="store_true", help="debug output on the console")
            if command.configure:
                command.configure(cmd_parser)
        return parser

    @handle_command_error
    def _load(self, args: argparse.Namespace) -> int:
        self.config = load_config(args.config, args.override)
        self.config_path = args.config
        return 0

    def dispatch(self, argv: Optional[List[str]] = None) -> int:
        """Parse `argv`, load the config and run the command; returns the exit code."""
        parser = self.build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
        setup_logging(logging.INFO)
        code = self._load(args)
        if code:
            log_command_usage(args.command, args.config, success=False)
            return code
        cfg = self.config
        level = logging.DEBUG if args.verbose else cfg.output.log_level
        setup_logging(level, log_dir=cfg.output.dir if cfg.output.log_files else None)
        command = self.commands.get(args.command)
        if command is None:
            return EXIT_FAILURE
        self.logger.info("Running %s with seed %d", command.name, cfg.seed)
        code = command.run(self, cfg, args)
        log_command_usage(command.name, args.config, success=code == 0)
        return code


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    app = FusionApp()
    code = app._load_commands()
    if code:
        return code
    return app.dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
