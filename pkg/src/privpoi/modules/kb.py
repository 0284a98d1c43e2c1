"""
Fine-grained preference knowledge base.

One NDJSON file: a header line with the schema version, then one entry per
user. The file is held in memory and rewritten through a temp file plus an
atomic rename on every write.
"""
import logging
import threading
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

from privpoi.core.utils.errors import DatasetError, KBError
from privpoi.core.utils.io import atomic_write_text, read_ndjson, to_ndjson_line
from privpoi.prompting.parsers import TemporalPrefs, TransitionPrefs

log = logging.getLogger('privpoi')

__all__ = [
    'KB_SCHEMA_VERSION',
    'PREFERENCE_FIELDS',
    'FineGrainedPreferences',
    'PreferenceKB',
]

KB_SCHEMA_VERSION = 1

PREFERENCE_FIELDS = (
    'categorical_transition',
    'categorical_temporal',
    'regional_transition',
    'regional_temporal',
    'distance_temporal',
)

_TRANSITION_FIELDS = ('categorical_transition', 'regional_transition')

_ASPECT_FIELDS = {
    'category': ('categorical_transition', 'categorical_temporal'),
    'region': ('regional_transition', 'regional_temporal'),
    'distance': (None, 'distance_temporal'),
}


@dataclass(frozen=True)
class FineGrainedPreferences:
    """The five preference types of one user, plus extraction metadata.

    Region labels are 'r<id>' tokens and distance labels are bucket names.
    """
    categorical_transition: TransitionPrefs = field(default_factory=TransitionPrefs)
    categorical_temporal: TemporalPrefs = field(default_factory=TemporalPrefs)
    regional_transition: TransitionPrefs = field(default_factory=TransitionPrefs)
    regional_temporal: TemporalPrefs = field(default_factory=TemporalPrefs)
    distance_temporal: TemporalPrefs = field(default_factory=TemporalPrefs)
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def empty(cls, **metadata: Any) -> 'FineGrainedPreferences':
        return cls(metadata=dict(metadata))

    def is_empty(self) -> bool:
        return not any(getattr(self, name) for name in PREFERENCE_FIELDS)

    def get(self, preference: str) -> Union[TransitionPrefs, TemporalPrefs]:
        if preference not in PREFERENCE_FIELDS:
            raise ValueError(f"Unknown preference type '{preference}'")
        return getattr(self, preference)

    @staticmethod
    def aspect_fields(aspect: str) -> tuple[Optional[str], str]:
        """(transition field or None, temporal field) of an aspect."""
        try:
            return _ASPECT_FIELDS[aspect]
        except KeyError as e:
            raise ValueError(f"Unknown aspect '{aspect}'") from e

    def with_aspect(
        self,
        aspect: str,
        transition: Optional[TransitionPrefs] = None,
        temporal: Optional[TemporalPrefs] = None,
    ) -> 'FineGrainedPreferences':
        """Copy with one aspect's structures replaced (None keeps the old one)."""
        transition_field, temporal_field = self.aspect_fields(aspect)
        changes = {}
        if transition is not None and transition_field is not None:
            changes[transition_field] = transition
        if temporal is not None:
            changes[temporal_field] = temporal
        return replace(self, **changes)

    def with_metadata(self, **metadata: Any) -> 'FineGrainedPreferences':
        return replace(self, metadata={**self.metadata, **metadata})

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in PREFERENCE_FIELDS:
            value = getattr(self, name)
            if name in _TRANSITION_FIELDS:
                out[name] = value.to_list()
            else:
                # Pairs keep the key order through sort_keys encoding.
                out[name] = [[k, list(vs)] for k, vs in value.entries]
        out['metadata'] = dict(self.metadata)
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> 'FineGrainedPreferences':
        kwargs: dict[str, Any] = {}
        for name in PREFERENCE_FIELDS:
            value = d.get(name) or []
            if name in _TRANSITION_FIELDS:
                kwargs[name] = TransitionPrefs.from_list(value)
            else:
                kwargs[name] = TemporalPrefs(tuple((k, tuple(vs)) for k, vs in value))
        kwargs['metadata'] = dict(d.get('metadata') or {})
        return cls(**kwargs)


class PreferenceKB:
    """Per-user preference store.

    Writers are serialized by an internal lock; `get` never blocks on them.
    A failed write leaves both the file and the in-memory view unchanged.

    Parameters
    ----------
    path
        NDJSON file; None keeps the KB in memory only.
    """
    def __init__(self, path: Optional[Union[Path, str]] = None) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, FineGrainedPreferences] = {}
        self._lock = threading.RLock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            records = list(read_ndjson(self.path))
        except DatasetError as e:
            raise KBError(f"Cannot read knowledge base: {e}") from e
        if not records:
            return
        header, entries = records[0], records[1:]
        version = header.get('schema_version')
        if version != KB_SCHEMA_VERSION:
            raise KBError(
                f"{self.path}: unsupported knowledge base schema version {version!r}",
            )
        for entry in entries:
            self._entries[str(entry['user_id'])] = FineGrainedPreferences.from_dict(
                entry['preferences'],
            )
        log.info(f"Loaded {len(self._entries)} preference entries from {self.path}")

    def _flush(self) -> None:
        if self.path is None:
            return
        lines = [to_ndjson_line({'schema_version': KB_SCHEMA_VERSION, 'kind': 'preference-kb'})]
        for user_id in sorted(self._entries):
            lines.append(to_ndjson_line({
                'user_id': user_id,
                'preferences': self._entries[user_id].to_dict(),
            }))
        atomic_write_text(self.path, ''.join(line + '\n' for line in lines))

    def put_many(self, entries: Mapping[str, FineGrainedPreferences]) -> None:
        """Store several entries in one atomic rewrite."""
        with self._lock:
            prior = {u: self._entries.get(u) for u in entries}
            self._entries.update(entries)
            try:
                self._flush()
            except OSError as e:
                for user_id, old in prior.items():
                    if old is None:
                        self._entries.pop(user_id, None)
                    else:
                        self._entries[user_id] = old
                raise KBError(f"Failed to write knowledge base {self.path}: {e}") from e

    def put(self, user_id: str, preferences: FineGrainedPreferences) -> None:
        """Store (overwrite) the preferences of `user_id`."""
        self.put_many({user_id: preferences})

    def get(self, user_id: str) -> Optional[FineGrainedPreferences]:
        return self._entries.get(user_id)

    def __contains__(self, user_id: object) -> bool:
        return user_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._entries))

    def users(self) -> tuple[str, ...]:
        return tuple(sorted(self._entries))
