"""
Worker pool for instance-level parallelism.

Results always come back in input order, so reductions over them are
reproducible regardless of the worker count.
"""

import multiprocessing
from typing import Callable, List, Sequence, TypeVar

from .logging_config import get_logger

logger = get_logger(__name__)

A = TypeVar('A')
R = TypeVar('R')


def ordered_map(func: Callable[[A], R], items: Sequence[A], workers: int = 1) -> List[R]:
    """
    Map func over items, optionally across worker processes.

    Args:
        func: Picklable top-level callable
        items: Inputs
        workers: Process count; 1 or less runs in-process

    Returns:
        Results in input order
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    processes = min(workers, len(items))
    logger.debug(f'Dispatching {len(items)} tasks to {processes} workers')
    with multiprocessing.Pool(processes=processes) as pool:
        return pool.map(func, items)
