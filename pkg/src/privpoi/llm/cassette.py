"""
Record/replay of chat exchanges as NDJSON cassettes.

Each line is {key, request, response, timestamp}; the key is the request tag
plus a sha256 of its canonical content, and replay requires an exact match.
"""
import logging
import threading
from collections.abc import Iterable, Mapping
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Union

from privpoi.core.utils.errors import ReplayMissError
from privpoi.core.utils.io import read_ndjson, write_ndjson
from privpoi.llm.types import ChatBackend, ChatRequest

log = logging.getLogger('privpoi')

__all__ = [
    'CassetteRecorder',
    'ReplayBackend',
    'record_cassette',
    'load_cassette',
]


class CassetteRecorder:
    """Backend wrapper that records every successful exchange."""
    def __init__(self, backend: ChatBackend) -> None:
        self.backend = backend
        self.entries: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()

    def send(self, request: ChatRequest, timeout: float) -> str:
        text = self.backend.send(request, timeout)
        key = request.key()
        with self._lock:
            # First response wins so replays stay deterministic.
            self.entries.setdefault(key, {
                'key': key,
                'request': request.to_dict(),
                'response': text,
                'timestamp': datetime.now(timezone.utc).isoformat(),
            })
        return text


class ReplayBackend:
    """Serves responses recorded in a cassette; unknown requests raise."""
    def __init__(self, entries: Union[Mapping[str, str], Iterable[dict[str, Any]]]) -> None:
        if isinstance(entries, Mapping):
            self.responses = dict(entries)
        else:
            self.responses = {}
            for entry in entries:
                self.responses.setdefault(entry['key'], entry['response'])

    def __len__(self) -> int:
        return len(self.responses)

    def send(self, request: ChatRequest, timeout: float) -> str:
        key = request.key()
        try:
            return self.responses[key]
        except KeyError as e:
            raise ReplayMissError(
                f"Request '{request.tag}' ({key}) is not in the cassette",
            ) from e


def record_cassette(session: CassetteRecorder, path: Union[Path, str]) -> Path:
    """Write the exchanges of a recording session to `path`."""
    path = Path(path)
    n = write_ndjson(path, session.entries.values())
    log.info(f"Recorded {n} exchanges to {path}")
    return path


def load_cassette(path: Union[Path, str]) -> ReplayBackend:
    backend = ReplayBackend(read_ndjson(path))
    log.info(f"Loaded {len(backend)} recorded exchanges from {path}")
    return backend
