"""
Command-Line Application Module

This module builds the argument parser of the parity stabilization
simulator and dispatches parsed commands to their handlers.

Commands:
- simulate: run one experiment preset and write its CSV/JSON table
- sweep: run a preset once per value of a dotted config parameter,
  concurrently over a process pool

Usage:
    app = CliApp()
    app.setup_commands(CommandHandlers())
    exit_code = await app.run(["simulate", "--experiment", "fig3d"])
"""

import argparse
from typing import List, Optional

from backend.src.cli.console import LogLevel, configure_logging
from backend.src.cli.handlers import EXIT_INVALID, CommandHandlers
from backend.src.config import constants


class CliApp:
    """
    Argument parser plus command registry.

    Attributes:
        parser: Top-level parser with one subparser per command
    """

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog="main.py",
            description="Density-matrix simulator for ancilla-based parity stabilization "
                        "of two data qubits.",
        )
        self.parser.add_argument("--log-level", choices=[lvl.value for lvl in LogLevel], default=None,
                                 help="Logging level (overrides -v)")
        self.parser.add_argument("-v", "--verbose", action="count", default=0,
                                 help="Increase logging verbosity (-v info, -vv debug)")
        self._subparsers = self.parser.add_subparsers(dest="command")
        self._subparsers.required = True

    @staticmethod
    def _add_common(parser: argparse.ArgumentParser):
        parser.add_argument("--config", default=None, help="JSON configuration file")
        parser.add_argument("--experiment", choices=constants.EXPERIMENTS, default=None,
                            help="Experiment preset")
        parser.add_argument("--rounds", type=int, default=None, help="Number of rounds N")
        parser.add_argument("--mode", choices=constants.MODES, default=None)
        parser.add_argument("--shots", type=int, default=None,
                            help="Shots per tomography setting (0 = exact expectation values)")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--format", choices=constants.OUTPUT_FORMATS, default=None)

    def setup_commands(self, handlers: CommandHandlers):
        """
        Register the subcommands and bind them to ``handlers``.

        Args:
            handlers: Object implementing one coroutine per command
        """
        simulate = self._subparsers.add_parser("simulate", help="Run one experiment")
        self._add_common(simulate)
        simulate.add_argument("--out", default=None, help="Output file (stdout when omitted)")
        simulate.add_argument("--dump-schedule", action="store_true",
                              help="Print the compiled pulse schedule to stderr")
        simulate.set_defaults(handler=handlers.simulate)

        sweep = self._subparsers.add_parser("sweep", help="Run an experiment over parameter values")
        self._add_common(sweep)
        sweep.add_argument("--param", required=True, help="Dotted config key, e.g. timing.feedback_delay_ns")
        sweep.add_argument("--values", nargs="+", required=True, help="Values assigned to --param")
        sweep.add_argument("--workers", type=int, default=None, help="Maximum concurrent runs")
        sweep.add_argument("--out-dir", default=None, help="Directory for one result file per value")
        sweep.set_defaults(handler=handlers.sweep)

    async def run(self, argv: Optional[List[str]] = None) -> int:
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_INVALID if e.code else 0
        level = LogLevel(args.log_level) if args.log_level else LogLevel.from_verbosity(args.verbose)
        configure_logging(level)
        return await args.handler(args)
