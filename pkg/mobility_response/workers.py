"""
Country Worker Pool

Fans independent per-country computations out to a bounded pool of
processes. With a single worker everything runs in-process.
"""

import logging
import multiprocessing as mp
import os
from typing import Any, Callable, Dict, Iterable, Tuple

logger = logging.getLogger(__name__)


class CountryWorkerPool:
    """
    Runs ``func(*args)`` per country and merges results keyed on iso code.

    The returned dict is ordered by sorted iso code, so downstream output
    does not depend on completion order.
    """

    def __init__(self, max_workers: int = None):
        self.max_workers = max_workers or int(os.getenv('MOBILITY_MAX_WORKERS', '1'))
        self.stats = {'tasks': 0, 'pooled_runs': 0}
        logger.debug(f"CountryWorkerPool initialized with {self.max_workers} workers")

    def map(self, func: Callable[..., Any], tasks: Iterable[Tuple[str, tuple]]) -> Dict[str, Any]:
        """
        Args:
            func: picklable module-level function
            tasks: (iso_code, args) pairs

        Returns:
            Dict of iso_code -> func result, in sorted code order
        """
        tasks = sorted(tasks, key=lambda task: task[0])
        self.stats['tasks'] += len(tasks)
        if self.max_workers == 1 or len(tasks) < 2:
            results = [func(*args) for _, args in tasks]
        else:
            processes = min(self.max_workers, len(tasks))
            self.stats['pooled_runs'] += 1
            logger.info(f"Running {len(tasks)} country tasks on {processes} worker processes")
            with mp.Pool(processes=processes) as pool:
                results = pool.starmap(func, [args for _, args in tasks])
        return {code: result for (code, _), result in zip(tasks, results)}

    def get_stats(self) -> Dict[str, Any]:
        return {**self.stats, 'max_workers': self.max_workers}
