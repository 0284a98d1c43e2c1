"""
Multitask next-POI recommendation.

A request is answered in one dialogue: the task instruction (with the
candidate names) is the system message, the next category, region and
distance are predicted from the user's own and the neighbors' preferences,
and a final prompt asks for ten ranked candidates.

Note: If adding new public methods, please add them to __all__
at the top of the file and in modules/__init__.py.
"""
import logging
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Optional

from privpoi.core.calc.geo import haversine, rank_by_distance, region_label
from privpoi.core.utils.errors import ConfigError, ParseError
from privpoi.data.corpus import PoiCatalog, SocialGraph
from privpoi.llm.client import LlmClient
from privpoi.modules.extraction import (REFLECTION_SOURCES, ExtractionConfig,
                                        instruction_prompt)
from privpoi.modules.kb import FineGrainedPreferences, PreferenceKB
from privpoi.modules.neighbors import (NEIGHBOR_KINDS, CheckinDistribution,
                                       NeighborSet, find_neighbors,
                                       summarize_neighbor_preferences)
from privpoi.privacy.config import DEFAULT_DISTANCE_BINS
from privpoi.privacy.sequences import (ASPECT_NAMES, ReleasedDay,
                                       distance_bin_labels)
from privpoi.prompting.dialogue import Dialogue
from privpoi.prompting.parsers import (MAX_RECOMMENDATIONS,
                                       ParsedRecommendation,
                                       parse_recommendations,
                                       parse_single_label)
from privpoi.prompting.templates import (ASPECT_WORDS, format_candidates,
                                         format_checkins, format_hints,
                                         format_hour, format_tokens, render)

log = logging.getLogger('privpoi')

__all__ = [
    'ABLATIONS',
    'PipelineSwitches',
    'ablation_switches',
    'RecommendationRequest',
    'RecommendationResult',
    'predict_next_aspect',
    'Recommender',
]

RECOMMENDATION_FORMAT = '{POI: reason; [importance ranking]}'

_REGION_ID = re.compile(r'\b[rR]\s*(\d+)\b')


@dataclass(frozen=True)
class PipelineSwitches:
    """Which pipeline components and privacy mechanisms are active.

    Parameters
    ----------
    aspects
        Aspects probed during extraction and predicted at request time. Empty
        falls back to prompting with raw check-in sequences.
    reflection_sources
        Segment sources of self-reflection.
    neighbor_kinds
        Neighbor kinds retrieved; empty disables neighbor retrieval.
    perturb_sequences
        OUE on category, region and distance tokens.
    perturb_distributions
        Laplace noise on check-in distributions and social link flipping.
    fuzzify_pois
        Geo-fuzzification of POIs.
    """
    aspects: tuple[str, ...] = ASPECT_NAMES
    reflection_sources: tuple[str, ...] = REFLECTION_SOURCES
    neighbor_kinds: tuple[str, ...] = NEIGHBOR_KINDS
    perturb_sequences: bool = True
    perturb_distributions: bool = True
    fuzzify_pois: bool = True
    ablations: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'aspects', tuple(a for a in ASPECT_NAMES if a in self.aspects))
        object.__setattr__(
            self, 'reflection_sources',
            tuple(s for s in REFLECTION_SOURCES if s in self.reflection_sources),
        )
        object.__setattr__(
            self, 'neighbor_kinds',
            tuple(k for k in NEIGHBOR_KINDS if k in self.neighbor_kinds),
        )

    @property
    def private(self) -> bool:
        return self.perturb_sequences or self.perturb_distributions or self.fuzzify_pois

    def extraction_config(self, m: int = 1, n: int = 5) -> ExtractionConfig:
        return ExtractionConfig(
            m=m, n=n, aspects=self.aspects, reflection_sources=self.reflection_sources,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            'ablations': list(self.ablations),
            'aspects': list(self.aspects),
            'reflection_sources': list(self.reflection_sources),
            'neighbor_kinds': list(self.neighbor_kinds),
            'perturb_sequences': self.perturb_sequences,
            'perturb_distributions': self.perturb_distributions,
            'fuzzify_pois': self.fuzzify_pois,
        }


def _drop(name: str, values: Sequence[str]):
    return lambda s: replace(s, **{name: tuple(v for v in getattr(s, name) if v not in values)})


# Ablation name -> switch change.
ABLATIONS = {
    '-MP': _drop('aspects', ASPECT_NAMES),
    '-MP-C': _drop('aspects', ('category',)),
    '-MP-R': _drop('aspects', ('region',)),
    '-MP-D': _drop('aspects', ('distance',)),
    '-SR': _drop('reflection_sources', REFLECTION_SOURCES),
    '-SR-R': _drop('reflection_sources', ('recent',)),
    '-SR-H': _drop('reflection_sources', ('history',)),
    '-NR': _drop('neighbor_kinds', NEIGHBOR_KINDS),
    '-NR-G': _drop('neighbor_kinds', ('geographical',)),
    '-NR-C': _drop('neighbor_kinds', ('semantic',)),
    '-NR-S': _drop('neighbor_kinds', ('social',)),
    '-PT': lambda s: replace(
        s, perturb_sequences=False, perturb_distributions=False, fuzzify_pois=False,
    ),
    '-PT-S': lambda s: replace(s, perturb_sequences=False),
    '-PT-D': lambda s: replace(s, perturb_distributions=False),
    '-PT-P': lambda s: replace(s, fuzzify_pois=False),
}


def ablation_switches(ablations: Optional[Iterable[str]] = None) -> PipelineSwitches:
    """Pipeline switches with the named components removed.

    Parameters
    ----------
    ablations
        Ablation names such as '-SR' or '-PT-P', or one comma-separated string.

    Raises
    ------
    ConfigError
        For an unknown ablation name.
    """
    if ablations is None:
        return PipelineSwitches()
    if isinstance(ablations, str):
        ablations = ablations.split(',')
    names = tuple(dict.fromkeys(a.strip() for a in ablations if a and a.strip()))

    switches = PipelineSwitches()
    for name in names:
        try:
            switches = ABLATIONS[name](switches)
        except KeyError as e:
            raise ConfigError(
                f"Unknown ablation '{name}'; expected one of {', '.join(ABLATIONS)}",
            ) from e
    return replace(switches, ablations=names)


@dataclass(frozen=True)
class RecommendationRequest:
    """One next-POI query.

    `current` holds the released context of the day being predicted and
    `history` earlier released days (only used without multitask probing).
    """
    user_id: str
    current: ReleasedDay
    query_day: str
    query_hour: int
    candidates: tuple[str, ...]
    history: tuple[ReleasedDay, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, 'candidates', tuple(self.candidates))
        object.__setattr__(self, 'history', tuple(self.history))
        if not self.candidates:
            raise ValueError("A recommendation request needs candidates")
        if not len(self.current):
            raise ValueError("A recommendation request needs a non-empty context")
        if not 0 <= self.query_hour <= 23:
            raise ValueError(f"query hour out of range: {self.query_hour}")


@dataclass(frozen=True)
class RecommendationResult:
    """Up to ten ranked (poi_id, reason) items plus diagnostics."""
    user_id: str
    items: tuple[tuple[str, str], ...]
    ranking: tuple[str, ...]
    predictions: dict[str, Optional[str]] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def poi_ids(self) -> tuple[str, ...]:
        return tuple(poi for poi, _ in self.items)

    @property
    def fallback(self) -> bool:
        return bool(self.diagnostics.get('fallback'))

    def to_dict(self) -> dict[str, Any]:
        return {
            'user_id': self.user_id,
            'items': [{'poi_id': p, 'reason': r} for p, r in self.items],
            'ranking': list(self.ranking),
            'predictions': dict(self.predictions),
            'diagnostics': dict(self.diagnostics),
        }


## Aspect prediction --------------------------------------------------------#
def _region_parser(text: str) -> str:
    label = parse_single_label(text)
    match = _REGION_ID.search(label) or re.fullmatch(r'\s*(\d+)\s*', label)
    if match is None:
        raise ParseError(f"No region id in {label!r}", raw=str(text))
    return region_label(int(match.group(1)))


def _distance_parser(labels: Sequence[str]):
    def parse(text: str) -> str:
        label = parse_single_label(text)
        squashed = label.replace(' ', '').lower()
        for bin_label in labels:
            if bin_label.lower() == squashed:
                return bin_label
        for bin_label in labels:
            if bin_label.lower() in squashed:
                return bin_label
        return label
    return parse


def _preference_lines(owner: str, prefs: FineGrainedPreferences, aspect: str) -> str:
    _, _, adjective, _ = ASPECT_WORDS[aspect]
    transition_field, temporal_field = FineGrainedPreferences.aspect_fields(aspect)
    lines = []
    if transition_field is not None:
        lines.append(
            f"{owner} {adjective} transition preference: "
            f"{{{prefs.get(transition_field).to_text()}}}",
        )
    lines.append(
        f"{owner} {adjective} temporal preference: {{{prefs.get(temporal_field).to_text()}}}",
    )
    return '\n'.join(lines) + '\n'


def predict_next_aspect(
    own: Optional[FineGrainedPreferences],
    neighbor_summary: Optional[FineGrainedPreferences],
    current: ReleasedDay,
    aspect: str,
    query_time: tuple[str, int],
    dialogue: Dialogue,
    distance_labels: Sequence[str] = distance_bin_labels(DEFAULT_DISTANCE_BINS),
) -> Optional[str]:
    """Predict the next category, region or distance bucket.

    Parameters
    ----------
    own
        The user's stored preferences; None renders as 'none'.
    neighbor_summary
        Summarized neighbor preferences; None leaves neighbors out of the
        prompt entirely.
    current
        Released context of the query day.
    aspect
        'category', 'region' or 'distance'.
    query_time
        (day, hour) of the check-in being predicted.
    dialogue
        Request dialogue the turn is appended to.
    distance_labels
        Bucket labels a distance answer is normalized to.

    Returns
    -------
    str or None
        A category name, an 'r<id>' region label or a distance bucket label;
        None when the reply never parses.
    """
    if aspect not in ASPECT_NAMES:
        raise ValueError(f"Unknown aspect '{aspect}'")
    own = own or FineGrainedPreferences.empty()
    _, _, adjective, display = ASPECT_WORDS[aspect]

    context = _preference_lines("The user's own", own, aspect)
    neighbor_clause = ''
    if neighbor_summary is not None:
        context += _preference_lines("His neighbors'", neighbor_summary, aspect)
        kinds = 'temporal preference' if aspect == 'distance' else (
            f"transition preference and {adjective} temporal preference"
        )
        neighbor_clause = f", and his neighbors' {adjective} {kinds}"

    day, hour = query_time
    prompt = render(f"p6_{aspect}", {
        'context': context,
        'day': day,
        'hour': format_hour(hour),
        'sequence': format_tokens(current.tokens(aspect)),
        'neighbor_clause': neighbor_clause,
    })
    if aspect == 'region':
        parser = _region_parser
    elif aspect == 'distance':
        parser = _distance_parser(distance_labels)
    else:
        parser = parse_single_label

    try:
        return dialogue.ask(prompt, f"P6:{aspect}", parser, display)
    except ParseError:
        log.info(f"No {aspect} prediction; the hint is left out")
        return None


## Recommendation -----------------------------------------------------------#
class Recommender:
    """Answers recommendation requests against a populated preference KB.

    Parameters
    ----------
    catalog
        POI catalog.
    kb
        Preference knowledge base (read only here).
    distributions
        Released regional and categorical distributions per user.
    graph
        Released (flipped) social graph.
    switches
        Active pipeline components.
    client
        Shared LLM client.
    config
        Optional overrides: social_cap, history_days, distance_bins, and
        dialogue settings (model, temperature, max_tokens, repair_retries).
    """
    def __init__(
        self,
        catalog: PoiCatalog,
        kb: PreferenceKB,
        distributions: Mapping[str, Mapping[str, CheckinDistribution]],
        graph: SocialGraph,
        client: LlmClient,
        switches: Optional[PipelineSwitches] = None,
        config: Optional[dict[str, Any]] = None,
    ) -> None:
        self.catalog = catalog
        self.kb = kb
        self.distributions = distributions
        self.graph = graph
        self.client = client
        self.switches = switches or PipelineSwitches()
        self.social_cap = 3
        self.history_days = 5
        self.distance_bins = DEFAULT_DISTANCE_BINS
        self.llm_config: dict[str, Any] = {}

        if config is not None:
            # Overwrite defaults with config values.
            self.social_cap = int(config.get('social_cap', self.social_cap))
            self.history_days = int(config.get('history_days', self.history_days))
            self.distance_bins = tuple(config.get('distance_bins', self.distance_bins))
            self.llm_config = {
                k: config[k]
                for k in ('model', 'temperature', 'max_tokens', 'repair_retries')
                if k in config
            }
        self.distance_labels = distance_bin_labels(self.distance_bins)

    def _checkins(self, day: ReleasedDay) -> str:
        rows = []
        for poi_id, dow, hour in zip(day.pois, day.days, day.hours):
            poi = self.catalog.get(poi_id)
            rows.append((poi_id, poi.category_id, region_label(poi.region_id), dow, hour))
        return format_checkins(rows)

    def _candidate_rows(self, origin_id: str, candidates: Sequence[str]) -> list[tuple]:
        origin = self.catalog.get(origin_id)
        rows = []
        for poi_id in candidates:
            poi = self.catalog.get(poi_id)
            km = haversine((origin.lat, origin.lon), (poi.lat, poi.lon))
            rows.append((poi_id, poi.category_id, region_label(poi.region_id), km))
        return rows

    def fallback_ranking(self, request: RecommendationRequest) -> list[str]:
        """Candidates ordered by distance to the last released check-in."""
        origin = self.catalog.get(request.current.pois[-1])
        pois = [self.catalog.get(p) for p in request.candidates]
        return rank_by_distance((origin.lat, origin.lon), pois)

    def neighbors(self, user_id: str) -> NeighborSet:
        if not self.switches.neighbor_kinds:
            return NeighborSet(user_id)
        return find_neighbors(
            user_id,
            self.distributions,
            self.graph,
            self.kb.users(),
            kinds=self.switches.neighbor_kinds,
            social_cap=self.social_cap,
        )

    def recommend(self, request: RecommendationRequest) -> RecommendationResult:
        """Recommend up to ten candidates for `request`.

        LLM transport failures propagate; a final reply that never parses
        falls back to the distance ordering and is flagged in diagnostics.
        """
        system = instruction_prompt(', '.join(request.candidates))
        neighbors = self.neighbors(request.user_id)

        summary = None
        if self.switches.neighbor_kinds and self.switches.aspects:
            summary = summarize_neighbor_preferences(
                neighbors, self.kb, self.client, system=system, llm_config=self.llm_config,
            )

        dialogue = Dialogue(self.client, system=system, config=self.llm_config)
        own = self.kb.get(request.user_id)
        query_time = (request.query_day, request.query_hour)
        predictions: dict[str, Optional[str]] = {}
        for aspect in self.switches.aspects:
            predictions[aspect] = predict_next_aspect(
                own, summary, request.current, aspect, query_time, dialogue,
                distance_labels=self.distance_labels,
            )

        context = ''
        if not self.switches.aspects and request.history:
            days = request.history[-self.history_days:]
            context = "The user's earlier check-in sequences:\n" + ''.join(
                f"{{{self._checkins(day)}}}\n" for day in days
            )
        hints = {a: v for a, v in predictions.items() if v}
        prompt = render('p7_recommend', {
            'context': context,
            'candidates': format_candidates(
                self._candidate_rows(request.current.pois[-1], request.candidates),
            ),
            'sequence': self._checkins(request.current),
            'hints': format_hints(hints, ASPECT_NAMES),
        })

        diagnostics: dict[str, Any] = {
            'neighbors': neighbors.to_dict(),
            'fallback': False,
            'dropped': 0,
        }
        try:
            parsed = dialogue.ask(
                prompt, 'P7',
                lambda text: parse_recommendations(text, request.candidates),
                RECOMMENDATION_FORMAT,
            )
        except ParseError:
            log.warning(
                f"Recommendation for user {request.user_id} did not parse; "
                f"falling back to distance ordering",
            )
            ranked = self.fallback_ranking(request)[:MAX_RECOMMENDATIONS]
            parsed = ParsedRecommendation(
                items=tuple((p, '') for p in ranked), ranking_found=False,
            )
            diagnostics['fallback'] = True

        diagnostics['dropped'] = parsed.dropped
        diagnostics['repairs'] = dialogue.repairs
        diagnostics['ranking_found'] = parsed.ranking_found
        if parsed.dropped:
            log.warning(
                f"Dropped {parsed.dropped} recommended label(s) not among the candidates",
            )
        return RecommendationResult(
            user_id=request.user_id,
            items=parsed.items,
            ranking=parsed.ranking,
            predictions=predictions,
            diagnostics=diagnostics,
        )
