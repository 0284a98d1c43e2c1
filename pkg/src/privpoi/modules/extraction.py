"""
Multitask reflective preference extraction.

For every aspect (category, then region, then distance) a separate dialogue
probes the user's preferences on the current sequence, then reflects on
sampled segments: the LLM predicts each segment's held-out last token, is
told the actual one, and rewrites its preferences.

Note: If adding new public methods, please add them to __all__
at the top of the file and in modules/__init__.py.
"""
import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from privpoi.core.utils.errors import (ConfigError, ExtractionError, LlmError,
                                       ParseError)
from privpoi.llm.client import LlmClient
from privpoi.modules.kb import FineGrainedPreferences, PreferenceKB
from privpoi.privacy.sequences import ASPECT_NAMES, ReleasedDay, ReleasedViews
from privpoi.prompting.dialogue import Dialogue
from privpoi.prompting.parsers import (TemporalPrefs, TransitionPrefs,
                                       parse_pair_list, parse_single_label,
                                       parse_temporal_map)
from privpoi.prompting.templates import (ASPECT_WORDS, format_hour,
                                         format_tokens, render)

log = logging.getLogger('privpoi')

__all__ = [
    'REFLECTION_SOURCES',
    'CATALOG_PLACEHOLDER',
    'ExtractionConfig',
    'Segment',
    'sample_recent_segments',
    'sample_contextual_segments',
    'instruction_prompt',
    'probe_preferences',
    'reflect_preferences',
    'extract_user_preferences',
    'select_participants',
    'extract_population',
]

REFLECTION_SOURCES = ('recent', 'history')

# Candidate binding of the task instruction outside of recommendation.
CATALOG_PLACEHOLDER = 'the POI catalog'


def _as_tuple(value: Any) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(',') if v.strip())
    return tuple(value)


@dataclass(frozen=True)
class ExtractionConfig:
    """Segment sampling and ablation settings of preference extraction.

    Parameters
    ----------
    m
        Segments per reflection source.
    n
        Maximum segment length.
    aspects
        Aspects to probe; an empty tuple disables multitask probing.
    reflection_sources
        Segment sources used for self-reflection; empty disables it.
    """
    m: int = 1
    n: int = 5
    aspects: tuple[str, ...] = ASPECT_NAMES
    reflection_sources: tuple[str, ...] = REFLECTION_SOURCES

    def __post_init__(self) -> None:
        object.__setattr__(self, 'aspects', _as_tuple(self.aspects))
        object.__setattr__(self, 'reflection_sources', _as_tuple(self.reflection_sources))
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        unknown = set(self.aspects) - set(ASPECT_NAMES)
        if unknown:
            raise ConfigError(f"Unknown aspects {sorted(unknown)}")
        unknown = set(self.reflection_sources) - set(REFLECTION_SOURCES)
        if unknown:
            raise ConfigError(f"Unknown reflection sources {sorted(unknown)}")
        # Keep the canonical aspect order.
        object.__setattr__(self, 'aspects', tuple(a for a in ASPECT_NAMES if a in self.aspects))

    @classmethod
    def from_dict(cls, config: Optional[dict[str, Any]] = None) -> 'ExtractionConfig':
        if config is None:
            return cls()
        kwargs = {}
        for key in ('m', 'n'):
            if config.get(key) is not None:
                kwargs[key] = int(config[key])
        for key in ('aspects', 'reflection_sources'):
            if config.get(key) is not None:
                kwargs[key] = _as_tuple(config[key])
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        return {
            'm': self.m,
            'n': self.n,
            'aspects': list(self.aspects),
            'reflection_sources': list(self.reflection_sources),
        }


@dataclass(frozen=True)
class Segment:
    """A contiguous window [start, stop) of one day; its last record is held out.

    `day` indexes the user's days (history first, -1 is the current day).
    `tier` is the relevance tier of a contextual segment (0 = last POI).
    """
    source: str
    day: int
    start: int
    stop: int
    tier: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.source not in REFLECTION_SOURCES:
            raise ValueError(f"Unknown segment source '{self.source}'")
        if self.start < 0 or self.stop - self.start < 2:
            raise ValueError("A segment needs at least two records")

    def __len__(self) -> int:
        return self.stop - self.start

    def view(self, views: ReleasedViews) -> ReleasedDay:
        return views.days[self.day].slice(self.start, self.stop)


## Segment sampling ---------------------------------------------------------#
def sample_recent_segments(current: Sequence, m: int, n: int) -> list[Segment]:
    """The m rightmost non-overlapping windows of length <= n, oldest first.

    Windows are right-aligned on the sequence end; a shorter window is allowed
    at the head, and windows of a single record are never returned.
    """
    segments = []
    end = len(current)
    while end >= 2 and len(segments) < m:
        start = max(0, end - n)
        if end - start < 2:
            break
        segments.append(Segment(source='recent', day=-1, start=start, stop=end))
        end = start
    return segments[::-1]


def sample_contextual_segments(
    history: Sequence[Sequence[str]],
    current: Sequence[str],
    m: int,
    n: int,
) -> list[Segment]:
    """History windows whose second-last POI matches the current sequence.

    Tier 0 anchors on the last POI of `current`, tier 1 on the one before,
    and so on down to the first. Within a tier more recent windows come
    first. A matching record at position j of a day yields the window
    [max(0, j - n + 2), j + 2).

    Parameters
    ----------
    history
        POI ids of each history day, oldest first.
    current
        POI ids of the current day.
    m
        Maximum number of segments.
    n
        Maximum segment length.
    """
    segments: list[Segment] = []
    seen = set()
    for tier, anchor in enumerate(reversed(current)):
        if len(segments) >= m:
            break
        for day in range(len(history) - 1, -1, -1):
            pois = history[day]
            # Second-last at j, held-out last at j + 1.
            for j in range(len(pois) - 2, -1, -1):
                if pois[j] != anchor:
                    continue
                start, stop = max(0, j - n + 2), j + 2
                if (day, start, stop) in seen:
                    continue
                seen.add((day, start, stop))
                segments.append(Segment('history', day, start, stop, tier=tier))
                if len(segments) >= m:
                    return segments
    return segments


## Probing and reflection ---------------------------------------------------#
def instruction_prompt(candidates: str = CATALOG_PLACEHOLDER) -> str:
    """The general task instruction used as every dialogue's system message."""
    return render('p1_instruction', {'candidates': candidates})


def _format_hint(aspect: str, kind: str) -> str:
    noun, plural, _, _ = ASPECT_WORDS[aspect]
    if kind == 'transition':
        return f"{{{noun}-{noun},...}}"
    return f"{{time: [{plural}]}}"


def _ask_transition(dialogue: Dialogue, prompt: str, tag: str, aspect: str):
    try:
        return dialogue.ask(prompt, tag, parse_pair_list, _format_hint(aspect, 'transition'))
    except ParseError:
        return None


def _ask_temporal(dialogue: Dialogue, prompt: str, tag: str, aspect: str):
    try:
        return dialogue.ask(prompt, tag, parse_temporal_map, _format_hint(aspect, 'temporal'))
    except ParseError:
        return None


def probe_preferences(
    current: ReleasedDay,
    aspect: str,
    dialogue: Dialogue,
    preferences: Optional[FineGrainedPreferences] = None,
) -> FineGrainedPreferences:
    """Probe one aspect's preferences on the current sequence view.

    Category and region get a transition question, then a temporal one;
    distance only a temporal one. A structure whose reply never parses is
    left empty.
    """
    preferences = preferences or FineGrainedPreferences.empty()
    sequence = format_tokens(current.tokens(aspect))
    transition = None
    if aspect != 'distance':
        transition = _ask_transition(
            dialogue,
            render(f"p2_{aspect}_transition", {'sequence': sequence}),
            f"P2:{aspect}:transition",
            aspect,
        )
    temporal = _ask_temporal(
        dialogue,
        render(f"p2_{aspect}_temporal", {'sequence': sequence}),
        f"P2:{aspect}:temporal",
        aspect,
    )
    return preferences.with_aspect(
        aspect,
        transition=transition or TransitionPrefs(),
        temporal=temporal or TemporalPrefs(),
    )


def reflect_preferences(
    segment: ReleasedDay,
    aspect: str,
    dialogue: Dialogue,
    preferences: FineGrainedPreferences,
) -> FineGrainedPreferences:
    """One predict-then-correct round on a segment.

    The segment minus its last record is shown and the next token predicted;
    then the actual token is revealed and updated preferences are requested.
    Updated structures replace the prior ones; an unparseable update keeps
    the prior structure.
    """
    if len(segment) < 2:
        raise ValueError("A reflection segment needs at least two records")
    context = segment.slice(0, len(segment) - 1)
    truth = segment.labels(aspect)[-1]
    day, hour = segment.days[-1], segment.hours[-1]

    try:
        guess = dialogue.ask(
            render(f"p3_{aspect}", {
                'sequence': format_tokens(context.tokens(aspect)),
                'day': day,
                'hour': format_hour(hour),
            }),
            f"P3:{aspect}",
            parse_single_label,
            ASPECT_WORDS[aspect][3],
        )
        log.debug(f"Reflection on {aspect}: predicted {guess!r}, actual {truth!r}")
    except ParseError:
        pass

    transition = None
    if aspect != 'distance':
        transition = _ask_transition(
            dialogue,
            render(f"p4_{aspect}_transition", {'truth': truth}),
            f"P4:{aspect}:transition",
            aspect,
        )
    temporal = _ask_temporal(
        dialogue,
        render(f"p4_{aspect}_temporal", {'truth': truth}),
        f"P4:{aspect}:temporal",
        aspect,
    )
    return preferences.with_aspect(aspect, transition=transition, temporal=temporal)


def _segments(
    views: ReleasedViews,
    raw_days: Sequence[Sequence[str]],
    config: ExtractionConfig,
) -> list[Segment]:
    """Recent segments first, then contextual history segments.

    Contextual matching runs on the raw POI ids, on the user's side.
    """
    segments = []
    if 'recent' in config.reflection_sources:
        segments += sample_recent_segments(views.current.pois, config.m, config.n)
    if 'history' in config.reflection_sources:
        segments += sample_contextual_segments(raw_days[:-1], raw_days[-1], config.m, config.n)
    return segments


def extract_user_preferences(
    views: ReleasedViews,
    raw_days: Sequence[Sequence[str]],
    client: LlmClient,
    config: Optional[ExtractionConfig] = None,
    llm_config: Optional[dict[str, Any]] = None,
    metadata: Optional[dict[str, Any]] = None,
) -> FineGrainedPreferences:
    """Extract the five preference types of one user.

    Parameters
    ----------
    views
        Released (perturbed) training views of the user.
    raw_days
        Raw POI ids per day, aligned with `views.days`; used only to select
        contextual segments.
    client
        Shared LLM client.
    config
        Extraction settings.
    llm_config
        Dialogue settings (model, temperature, max_tokens, repair_retries).
    metadata
        Extra metadata stored with the preferences (e.g. epsilon).

    Raises
    ------
    ExtractionError
        If the LLM failed for every probed aspect.
    """
    config = config or ExtractionConfig()
    if len(raw_days) != len(views.days):
        raise ValueError("raw_days must align with the released days")

    preferences = FineGrainedPreferences.empty()
    segments = _segments(views, raw_days, config)
    system = instruction_prompt()
    failures = []
    for aspect in config.aspects:
        dialogue = Dialogue(client, system=system, config=llm_config)
        try:
            preferences = probe_preferences(views.current, aspect, dialogue, preferences)
            for segment in segments:
                preferences = reflect_preferences(
                    segment.view(views), aspect, dialogue, preferences,
                )
        except LlmError as e:
            log.warning(f"Extraction of {aspect} preferences failed for user {views.user_id}: {e}")
            failures.append(e)

    if config.aspects and len(failures) == len(config.aspects):
        raise ExtractionError(
            f"LLM failed for every aspect of user {views.user_id}: {failures[-1]}",
        ) from failures[-1]

    return preferences.with_metadata(
        m=config.m,
        n=config.n,
        aspects=list(config.aspects),
        reflection_sources=list(config.reflection_sources),
        segments=len(segments),
        **(metadata or {}),
    )


## Population ---------------------------------------------------------------#
def select_participants(
    users: Sequence[str],
    rate: float,
    rng: np.random.Generator,
) -> tuple[str, ...]:
    """Seeded subset of ceil(rate * |users|) users, in sorted order."""
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"participation rate must be in (0, 1], got {rate}")
    ordered = sorted(users)
    k = math.ceil(rate * len(ordered))
    if k >= len(ordered):
        return tuple(ordered)
    chosen = rng.choice(len(ordered), size=k, replace=False)
    return tuple(ordered[i] for i in sorted(chosen))


def extract_population(
    released: Mapping[str, ReleasedViews],
    raw_days: Mapping[str, Sequence[Sequence[str]]],
    client: LlmClient,
    kb: PreferenceKB,
    config: Optional[ExtractionConfig] = None,
    llm_config: Optional[dict[str, Any]] = None,
    participants: Optional[Sequence[str]] = None,
    jobs: int = 1,
    metadata: Optional[dict[str, Any]] = None,
) -> dict[str, FineGrainedPreferences]:
    """Extract preferences of every participant and store them in `kb`.

    Users whose extraction fails entirely are logged and left out of the KB.

    Raises
    ------
    ExtractionError
        If no participant could be extracted.
    """
    users = sorted(participants if participants is not None else released)
    results: dict[str, FineGrainedPreferences] = {}
    if not users:
        return results

    def work(user_id: str) -> FineGrainedPreferences:
        return extract_user_preferences(
            released[user_id], raw_days[user_id], client,
            config=config, llm_config=llm_config, metadata=metadata,
        )

    failed = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = {pool.submit(work, u): u for u in users}
        for future in as_completed(futures):
            user_id = futures[future]
            try:
                results[user_id] = future.result()
            except ExtractionError as e:
                log.warning(str(e))
                failed.append(user_id)

    if not results:
        raise ExtractionError(f"Preference extraction failed for all {len(users)} participants")

    ordered = {u: results[u] for u in sorted(results)}
    kb.put_many(ordered)
    log.info(f"Extracted preferences for {len(ordered)} users ({len(failed)} failed)")
    return ordered
