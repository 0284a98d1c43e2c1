"""
Tolerant parsers for the declared LLM output formats.

Every parser either returns a typed structure or raises ParseError carrying
the raw text; nothing else escapes, whatever the input.
"""
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from privpoi.core.utils.errors import ParseError

log = logging.getLogger('privpoi')

__all__ = [
    'DEFAULT_RANKING',
    'MAX_RECOMMENDATIONS',
    'TransitionPrefs',
    'TemporalPrefs',
    'ParsedRecommendation',
    'parse_pair_list',
    'parse_temporal_map',
    'parse_single_label',
    'parse_recommendations',
]

DEFAULT_RANKING = ('category', 'region', 'distance')
MAX_RECOMMENDATIONS = 10

_BRACES = re.compile(r'\{([^{}]*)\}')
_BRACKETS = re.compile(r'\[([^\[\]]*)\]')
_BULLET = re.compile(r'^\s*(?:[-*•]+|\d+[.)])\s+')
_ARROWS = re.compile(r'\s*(?:->|=>|→|⇒)\s*')
_DASHES = str.maketrans({'–': '-', '—': '-', '−': '-'})
_STRIP = ' \t\r\n"\'`*.,;:!?(){}[]“”‘’'
_TEMPORAL_ENTRY = re.compile(
    r'(\d{1,2}:\d{2}(?:\s*[ap]\.?m\.?)?|[^{}\[\],:;\n]+?)\s*:\s*\[([^\[\]]*)\]',
    re.IGNORECASE,
)


def _as_text(text: Union[str, bytes, None]) -> str:
    if text is None:
        return ''
    if isinstance(text, bytes):
        return text.decode('utf-8', errors='replace')
    return str(text)


def _clean(label: str) -> str:
    return _BULLET.sub('', label.replace('**', '')).strip(_STRIP)


## Preference structures ----------------------------------------------------#
@dataclass(frozen=True)
class TransitionPrefs:
    """Ordered (from, to) label pairs."""
    pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, 'pairs', tuple((str(a), str(b)) for a, b in self.pairs))

    def __bool__(self) -> bool:
        return bool(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def to_text(self) -> str:
        """'A-B, C-D', or 'none' when empty."""
        if not self.pairs:
            return 'none'
        return ', '.join(f"{a}-{b}" for a, b in self.pairs)

    def to_list(self) -> list[list[str]]:
        return [[a, b] for a, b in self.pairs]

    @classmethod
    def from_list(cls, pairs: Iterable[Sequence[str]]) -> 'TransitionPrefs':
        return cls(tuple((p[0], p[1]) for p in pairs))


@dataclass(frozen=True)
class TemporalPrefs:
    """Ordered map from a time token (day, hour or daypart) to labels."""
    entries: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, 'entries', tuple((str(k), tuple(str(v) for v in vs)) for k, vs in self.entries),
        )

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[str, list[str]]:
        return {k: list(vs) for k, vs in self.entries}

    def to_text(self) -> str:
        """'Evening: [Bars, Restaurants], 6pm: [Gym]', or 'none' when empty."""
        if not self.entries:
            return 'none'
        return ', '.join(f"{k}: [{', '.join(vs)}]" for k, vs in self.entries)

    @classmethod
    def from_dict(cls, d: dict[str, Sequence[str]]) -> 'TemporalPrefs':
        return cls(tuple((k, tuple(vs)) for k, vs in d.items()))


@dataclass(frozen=True)
class ParsedRecommendation:
    """Resolved (poi_id, reason) items, the global importance ranking and
    the number of labels that matched no candidate.
    """
    items: tuple[tuple[str, str], ...]
    ranking: tuple[str, ...] = DEFAULT_RANKING
    dropped: int = 0
    ranking_found: bool = field(default=True, compare=False)

    @property
    def poi_ids(self) -> tuple[str, ...]:
        return tuple(poi for poi, _ in self.items)


## Transition pairs ---------------------------------------------------------#
def _split_pair(item: str) -> Optional[tuple[str, str]]:
    item = item.strip()
    if ' - ' in item:
        a, b = item.rsplit(' - ', 1)
    elif item.count('-') == 1:
        a, b = item.split('-')
    else:
        return None
    a, b = _clean(a), _clean(b)
    if not a or not b:
        return None
    return a, b


def _pairs_in(body: str, prose: bool) -> list[tuple[str, str]]:
    pairs = []
    for item in re.split(r'[,\n;]', body):
        item = _BULLET.sub('', item)
        if prose and ':' in item:
            item = item.rsplit(':', 1)[1]
        pair = _split_pair(item)
        if pair is not None and pair not in pairs:
            pairs.append(pair)
    return pairs


def parse_pair_list(text: Union[str, bytes, None]) -> TransitionPrefs:
    """Extract 'a-b' pairs, e.g. from '{Restaurants-Bars, Bars-Pet Services}'.

    The first brace group holding pairs wins; without braces the whole text
    is scanned. Arrows count as separators. A label may contain spaces; an
    item is split on its last ' - ', else on its only hyphen.

    Raises
    ------
    ParseError
        If no pair can be extracted.
    """
    raw = _as_text(text)
    normalized = _ARROWS.sub(' - ', raw.translate(_DASHES))
    groups = _BRACES.findall(normalized)
    for body in groups or [normalized]:
        pairs = _pairs_in(body, prose=not groups)
        if pairs:
            return TransitionPrefs(tuple(pairs))
    raise ParseError("No 'a-b' pairs found in LLM output", raw=raw)


## Temporal maps ------------------------------------------------------------#
def parse_temporal_map(text: Union[str, bytes, None]) -> TemporalPrefs:
    """Extract 'key: [v1, v2]' entries, e.g. '{Evening: [Bars], 6pm: [Gym]}'.

    Keys may be day names, hours ('6pm', '18:00') or dayparts. Repeated keys
    are merged; entries with no values are dropped.

    Raises
    ------
    ParseError
        If no entry can be extracted.
    """
    raw = _as_text(text)
    merged: dict[str, list[str]] = {}
    for match in _TEMPORAL_ENTRY.finditer(raw.translate(_DASHES)):
        key = _clean(match.group(1))
        values = [_clean(v) for v in match.group(2).split(',')]
        values = [v for v in values if v]
        if not key or not values:
            continue
        bucket = merged.setdefault(key, [])
        bucket.extend(v for v in values if v not in bucket)
    if not merged:
        raise ParseError("No 'time: [labels]' entries found in LLM output", raw=raw)
    return TemporalPrefs(tuple((k, tuple(vs)) for k, vs in merged.items()))


## Single labels ------------------------------------------------------------#
def parse_single_label(text: Union[str, bytes, None]) -> str:
    """First non-empty line, stripped of quotes and punctuation.

    A leading 'Something:' prefix is dropped ('Category: Gym' -> 'Gym').
    """
    raw = _as_text(text)
    for line in raw.splitlines():
        label = _clean(line)
        if ':' in label:
            tail = _clean(label.rsplit(':', 1)[1])
            label = tail or _clean(label.rsplit(':', 1)[0])
        if label:
            return label
    raise ParseError("Empty LLM output where a single label was expected", raw=raw)


## Recommendations ----------------------------------------------------------#
def _ranking(text: str) -> tuple[Optional[tuple[str, ...]], str]:
    """Last bracket that is a permutation of the aspects, and the text
    with every such bracket removed.
    """
    found = None
    kept = []
    pos = 0
    for match in _BRACKETS.finditer(text):
        items = tuple(_clean(x).lower() for x in match.group(1).split(','))
        if sorted(items) == sorted(DEFAULT_RANKING):
            found = items
            kept.append(text[pos:match.start()])
            pos = match.end()
    kept.append(text[pos:])
    return found, ''.join(kept)


class _CandidateIndex:
    def __init__(self, candidates: Iterable[str]) -> None:
        self.names: list[str] = []
        self.exact: dict[str, str] = {}
        for name in candidates:
            name = str(name)
            if name.lower() not in self.exact:
                self.exact[name.lower()] = name
                self.names.append(name)

    def resolve(self, label: str) -> Optional[str]:
        low = label.lower()
        if not low:
            return None
        if low in self.exact:
            return self.exact[low]
        inside = [n for n in self.names if low in n.lower()]
        if len(inside) == 1:
            return inside[0]
        covering = [n for n in self.names if n.lower() in low]
        if len(covering) == 1:
            return covering[0]
        return None


def parse_recommendations(
    text: Union[str, bytes, None],
    candidates: Iterable[str],
) -> ParsedRecommendation:
    """Parse '{POI: reason; ...; [importance ranking]}' against candidates.

    Labels resolve case-insensitively, exact match first and then a unique
    substring match. Unresolvable labels are counted and dropped, duplicates
    keep their first occurrence, and at most ten items are returned. The
    ranking comes from the last bracket listing the three aspects, defaulting
    to category, region, distance.

    Parameters
    ----------
    text
        Raw LLM output.
    candidates
        Candidate POI names (ids) the output may refer to.

    Raises
    ------
    ParseError
        If no item resolves to a candidate.
    """
    raw = _as_text(text)
    index = _CandidateIndex(candidates)
    ranking, body = _ranking(raw)

    items: list[tuple[str, str]] = []
    seen = set()
    dropped = 0
    for segment in re.split(r'[\n;]', body):
        segment = _BULLET.sub('', segment).strip().strip('{}').strip()
        if not segment.strip(_STRIP):
            continue
        label, _, reason = segment.partition(':')
        poi = index.resolve(_clean(label))
        if poi is None:
            dropped += 1
            continue
        if poi in seen:
            continue
        seen.add(poi)
        if len(items) < MAX_RECOMMENDATIONS:
            items.append((poi, reason.strip().strip('{}').strip()))

    if not items:
        raise ParseError("No recommended POI matches a candidate", raw=raw)
    if dropped:
        log.debug(f"Dropped {dropped} unresolvable recommendation label(s)")
    return ParsedRecommendation(
        items=tuple(items),
        ranking=ranking or DEFAULT_RANKING,
        dropped=dropped,
        ranking_found=ranking is not None,
    )
