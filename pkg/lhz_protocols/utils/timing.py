"""
Timing utilities.

Helper functions for wall-time reporting and escalating retries.
"""

from typing import Callable, Tuple, Type, TypeVar

from ..logging_config import get_logger

logger = get_logger(__name__)

T = TypeVar('T')


def format_duration(seconds: float) -> str:
    """
    Format a wall-time duration in human-readable form.

    Args:
        seconds: Duration in seconds

    Returns:
        Formatted string (e.g., "1h 2m 30.5s")
    """
    whole = int(seconds)
    hours = whole // 3600
    minutes = (whole % 3600) // 60
    secs = seconds - 3600 * hours - 60 * minutes

    parts = []
    if hours > 0:
        parts.append(f'{hours}h')
    if minutes > 0:
        parts.append(f'{minutes}m')
    parts.append(f'{secs:.1f}s')

    return ' '.join(parts)


def retry_with_escalation(
    func: Callable[[int], T],
    max_attempts: int = 3,
    retry_on: Tuple[Type[BaseException], ...] = (Exception,),
) -> T:
    """
    Retry a function, passing it the attempt index so it can escalate effort.

    The integrator uses this to double its step count after a unitarity
    failure: attempt ``a`` runs with ``2**a`` times the base steps.

    Args:
        func: Callable receiving the zero-based attempt index
        max_attempts: Maximum number of attempts
        retry_on: Exception types that trigger a retry

    Returns:
        Function result

    Raises:
        The last exception if all attempts fail
    """
    if max_attempts < 1:
        raise ValueError('max_attempts must be at least 1')

    for attempt in range(max_attempts):
        try:
            return func(attempt)
        except retry_on as e:
            if attempt == max_attempts - 1:
                raise
            logger.debug(f'Attempt {attempt + 1}/{max_attempts} failed ({e}), escalating')

    raise RuntimeError('Retry failed with no exception')
