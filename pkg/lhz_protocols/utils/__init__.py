"""
Utility modules package.
"""

from .cache import (
    ensure_writable,
    load_csv,
    load_json,
    load_jsonl,
    save_csv,
    save_json,
    save_jsonl,
    stable_hash,
)
from .timing import format_duration, retry_with_escalation

__all__ = [
    'ensure_writable',
    'load_csv',
    'load_json',
    'load_jsonl',
    'save_csv',
    'save_json',
    'save_jsonl',
    'stable_hash',
    'format_duration',
    'retry_with_escalation',
]
