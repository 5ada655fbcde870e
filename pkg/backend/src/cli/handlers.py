"""
Command handlers for the simulator command line.

Each handler takes the parsed arguments, runs the requested work and
returns the process exit code. Simulator errors become a single
``error[<code>]: <message>`` line on stderr.

Usage:
    handlers = CommandHandlers()
    exit_code = await handlers.simulate(args)
"""

import logging
import sys
import traceback
from typing import Any, Dict

from backend.src.config.settings import (
    ExperimentConfig,
    apply_overrides,
    changed_fields,
    load_config,
    parse_value,
)
from backend.src.services.experiment_service import ExperimentService
from backend.src.services.results_writer import write_results
from backend.src.services.sweep_service import SweepService
from backend.src.simulation.errors import ConfigError, InvalidInputError, PropagationError, SimulationError

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2
EXIT_PROPAGATION = 3


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, PropagationError):
        return EXIT_PROPAGATION
    if isinstance(error, (ConfigError, InvalidInputError)):
        return EXIT_INVALID
    return EXIT_INTERNAL


class CommandHandlers:
    """
    Implements the ``simulate`` and ``sweep`` subcommands.

    Attributes:
        stdout: Stream receiving results when no output path is given
        stderr: Stream receiving error lines and schedule dumps
    """

    def __init__(self, stdout=None, stderr=None):
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr

    def _fail(self, error: BaseException) -> int:
        if isinstance(error, SimulationError):
            self.stderr.write(f"error[{error.code}]: {error}\n")
        else:
            logger.debug(traceback.format_exc())
            self.stderr.write(f"error[internal]: {type(error).__name__}: {error}\n")
        return exit_code_for(error)

    def _config(self, args) -> ExperimentConfig:
        config = load_config(args.config)
        overrides: Dict[str, Any] = {
            "experiment.name": args.experiment,
            "experiment.rounds": getattr(args, "rounds", None),
            "experiment.mode": getattr(args, "mode", None),
            "analysis.shots": getattr(args, "shots", None),
            "analysis.seed": getattr(args, "seed", None),
            "output.path": getattr(args, "out", None),
            "output.format": getattr(args, "format", None),
        }
        config = apply_overrides(config, overrides)
        changes = changed_fields(config)
        if changes:
            logger.info(f"[CLI] Non-default settings: {', '.join(changes)}")
        return config

    async def simulate(self, args) -> int:
        """Run one experiment and emit its result table."""
        try:
            config = self._config(args)
            service = ExperimentService(config)
            if args.dump_schedule:
                for line in service.schedule_listing():
                    self.stderr.write(line + "\n")
            table = service.run()
            write_results(table, config.output.format, config.output.path, stream=self.stdout)
        except Exception as e:
            return self._fail(e)
        return EXIT_OK

    async def sweep(self, args) -> int:
        """Run one experiment per value of a dotted config parameter."""
        try:
            config = self._config(args)
            values = [parse_value(v) for v in args.values]
            points = await SweepService(args.workers).run(
                config, args.param, values, args.out_dir, config.output.format
            )
        except Exception as e:
            return self._fail(e)

        failures = [p for p in points if not p.ok]
        for point in points:
            if point.ok:
                where = point.path or "-"
                last = point.table.rows[-1].fidelity if point.table.rows else None
                summary = f"final fidelity {last:.6f}" if last is not None else "no rows"
                self.stdout.write(f"{args.param}={point.value}\t{summary}\t{where}\n")
            else:
                self.stderr.write(f"{point.error} ({args.param}={point.value})\n")
        if failures:
            codes = {f.code for f in failures}
            return EXIT_PROPAGATION if codes == {PropagationError.code} else EXIT_INVALID
        return EXIT_OK
