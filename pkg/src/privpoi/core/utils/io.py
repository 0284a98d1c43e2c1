"""
Newline-delimited JSON and atomic file helpers.

All persisted artifacts (datasets, KB, cassettes, transcripts) go through here so
the on-disk encoding stays uniform: UTF-8, one compact JSON object per line,
sorted keys.
"""
import json
import logging
import os
import tempfile
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import Any, Union

from privpoi.core.utils.errors import DatasetError

log = logging.getLogger('privpoi')

__all__ = [
    'atomic_write_text',
    'dump_json',
    'load_json',
    'read_ndjson',
    'to_ndjson_line',
    'write_ndjson',
]


def to_ndjson_line(obj: Any) -> str:
    """Encode one object as a compact, key-sorted JSON line."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(',', ':'))


def atomic_write_text(path: Union[Path, str], text: str) -> None:
    """Write `text` to `path` through a temp file and an atomic rename.

    Readers see either the old file or the new one, never a partial write.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_ndjson(path: Union[Path, str], records: Iterable[Any]) -> int:
    """Atomically write records as NDJSON. Returns the record count."""
    lines = [to_ndjson_line(r) for r in records]
    atomic_write_text(path, ''.join(line + '\n' for line in lines))
    return len(lines)


def read_ndjson(path: Union[Path, str]) -> Iterator[dict[str, Any]]:
    """Yield objects from an NDJSON file, skipping blank lines."""
    path = Path(path)
    if not path.exists():
        raise DatasetError("file not found", path=str(path))
    with path.open(encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"invalid JSON ({e.msg})", path=str(path), line=number) from e


def load_json(path: Union[Path, str]) -> Any:
    """Read one JSON document."""
    path = Path(path)
    if not path.exists():
        raise DatasetError("file not found", path=str(path))
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise DatasetError(f"invalid JSON ({e.msg})", path=str(path), line=e.lineno) from e


def dump_json(path: Union[Path, str], obj: Any) -> None:
    """Atomically write a pretty-printed JSON document."""
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + '\n')
