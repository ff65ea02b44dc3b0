"""
Artifact store.

Reads and writes the pipeline's JSON, JSON-lines and CSV artifacts.
Every artifact carries a provenance block (config hash and seeds) and
writes are refused when the target exists unless overwriting is allowed.
"""

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from ..errors import ArtifactExistsError, MissingArtifactError
from ..logging_config import get_logger

logger = get_logger(__name__)


def stable_hash(payload: Any) -> str:
    """
    Compute a hash of a JSON-serializable payload.

    Keys are sorted so logically equal payloads hash equally.

    Args:
        payload: JSON-serializable object

    Returns:
        MD5 hash string
    """
    data = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.md5(data.encode()).hexdigest()


def ensure_writable(path: Path, overwrite: bool) -> None:
    """
    Refuse to clobber existing pipeline state.

    Raises:
        ArtifactExistsError: If path exists and overwrite is False
    """
    if path.exists() and not overwrite:
        raise ArtifactExistsError(
            f'{path} already exists; pass --overwrite to replace it'
        )
    path.parent.mkdir(parents=True, exist_ok=True)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    os.replace(tmp, path)


def save_json(
    path: Path,
    payload: Dict[str, Any],
    provenance: Dict[str, Any],
    overwrite: bool = False,
) -> None:
    """
    Save a JSON artifact with an embedded provenance block.

    Args:
        path: Target file
        payload: Artifact body
        provenance: Config hash and seeds
        overwrite: Replace an existing file
    """
    ensure_writable(path, overwrite)
    document = dict(payload)
    document['provenance'] = provenance
    _atomic_write(path, json.dumps(document, sort_keys=True, indent=2) + '\n')
    logger.debug(f'Wrote {path}')


def load_json(path: Path, stage: str) -> Dict[str, Any]:
    """
    Load a JSON artifact produced by a previous stage.

    Raises:
        MissingArtifactError: If the file does not exist
    """
    if not path.exists():
        raise MissingArtifactError(stage, str(path))
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def save_jsonl(
    path: Path,
    records: Iterable[Dict[str, Any]],
    provenance: Dict[str, Any],
    overwrite: bool = False,
) -> int:
    """
    Save a JSON-lines artifact; provenance is stamped on every record.

    Returns:
        Number of records written
    """
    ensure_writable(path, overwrite)
    lines = []
    for record in records:
        row = dict(record)
        row['provenance'] = provenance
        lines.append(json.dumps(row, sort_keys=True))
    _atomic_write(path, '\n'.join(lines) + ('\n' if lines else ''))
    logger.debug(f'Wrote {len(lines)} records to {path}')
    return len(lines)


def load_jsonl(path: Path, stage: str) -> List[Dict[str, Any]]:
    """
    Load a JSON-lines artifact.

    Raises:
        MissingArtifactError: If the file does not exist
    """
    if not path.exists():
        raise MissingArtifactError(stage, str(path))
    records = []
    with open(path, encoding='utf-8') as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def save_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    provenance: Optional[Dict[str, Any]] = None,
    overwrite: bool = False,
) -> None:
    """
    Save plot data as CSV. Provenance goes into a leading '#' comment line.
    """
    ensure_writable(path, overwrite)
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'w', encoding='utf-8', newline='') as f:
        if provenance is not None:
            f.write('# ' + json.dumps(provenance, sort_keys=True) + '\n')
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])
    os.replace(tmp, path)
    logger.debug(f'Wrote {path}')


def load_csv(path: Path, stage: str) -> List[Dict[str, str]]:
    """
    Load a CSV artifact as a list of dict rows, skipping comment lines.

    Raises:
        MissingArtifactError: If the file does not exist
    """
    if not path.exists():
        raise MissingArtifactError(stage, str(path))
    with open(path, encoding='utf-8', newline='') as f:
        lines = [line for line in f if not line.startswith('#')]
    return list(csv.DictReader(lines))


def _csv_cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ''
    return value
