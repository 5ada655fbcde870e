# src/services/sweep_service.py
import asyncio
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

from backend.src.config.settings import ExperimentConfig, apply_overrides, build_config
from backend.src.services.experiment_service import ResultTable, run_experiment
from backend.src.services.results_writer import write_results
from backend.src.simulation.errors import SimulationError

logger = logging.getLogger("sweep")


@dataclass
class SweepPoint:
    """
    Outcome of one sweep value.

    Attributes:
        value: Value assigned to the swept parameter
        table: Result table, None when the run failed
        error: ``error[<code>]: <message>`` line for failed runs
        code: Error code of a failed run
        path: File the table was written to, if any
    """

    value: Any
    table: Optional[ResultTable] = None
    error: Optional[str] = None
    code: Optional[str] = None
    path: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_point(tree: Dict[str, Any]) -> ResultTable:
    # Runs in a worker process; configs travel as plain trees
    return run_experiment(build_config(tree))


def _file_name(param: str, value: Any, fmt: str) -> str:
    safe = str(value).replace(os.sep, "_").replace(" ", "")
    return f"{param.replace('.', '_')}={safe}.{fmt}"


class SweepService:
    """
    Fans independent experiment configurations out over a process pool.

    Every point builds its own engine and noise model, so runs share no
    mutable state. Concurrency is bounded by a semaphore sized to the pool.
    """

    def __init__(self, workers: Optional[int] = None):
        """
        Initialize the sweep service.

        Args:
            workers: Maximum number of concurrent runs (defaults to the CPU count)
        """
        self.workers = max(1, workers or os.cpu_count() or 1)
        self._semaphore = asyncio.Semaphore(self.workers)

    async def _run_one(self, executor, loop, config: ExperimentConfig, param: str, value: Any,
                       out_dir: Optional[str], fmt: str) -> SweepPoint:
        async with self._semaphore:
            try:
                point_config = apply_overrides(config, {param: value})
                logger.info(f"[Sweep] Starting {param}={value}")
                table = await loop.run_in_executor(executor, _run_point, point_config.to_dict())
            except SimulationError as e:
                logger.error(f"[Sweep] {param}={value} failed: {e}")
                return SweepPoint(value=value, error=f"error[{e.code}]: {e}", code=e.code)
            path = None
            if out_dir:
                path = os.path.join(out_dir, _file_name(param, value, fmt))
                write_results(table, fmt, path)
            logger.info(f"[Sweep] Finished {param}={value}")
            return SweepPoint(value=value, table=table, path=path)

    async def run(self, config: ExperimentConfig, param: str, values: Sequence[Any],
                  out_dir: Optional[str] = None, fmt: str = "csv") -> List[SweepPoint]:
        """
        Run ``config`` once per value of the dotted parameter ``param``.

        Returns:
            List[SweepPoint]: In the order of ``values``
        """
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.workers) as executor:
            points = await asyncio.gather(
                *[self._run_one(executor, loop, config, param, value, out_dir, fmt) for value in values]
            )
        failed = sum(1 for p in points if not p.ok)
        logger.info(f"[Sweep] {len(points) - failed}/{len(points)} runs succeeded")
        return list(points)
