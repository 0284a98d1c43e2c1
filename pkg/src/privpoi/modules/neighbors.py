"""
Neighbor preference retrieval.

Geographical and semantic neighbors minimize the KL divergence between
(Laplace-perturbed) regional and categorical check-in distributions; social
neighbors are friends in the flipped social graph. Their stored preferences
are summarized by the LLM, one call per preference type.

Note: If adding new public methods, please add them to __all__
at the top of the file and in modules/__init__.py.
"""
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from privpoi.core.calc.divergence import kl_to_many, smooth_distribution
from privpoi.core.utils.errors import ParseError
from privpoi.core.utils.utils import derive_rng
from privpoi.data.corpus import PoiCatalog, SequenceViews, SocialGraph
from privpoi.llm.client import LlmClient
from privpoi.modules.kb import (PREFERENCE_FIELDS, FineGrainedPreferences,
                                PreferenceKB)
from privpoi.privacy.config import PrivacyConfig
from privpoi.privacy.mechanisms import laplace_perturb
from privpoi.prompting.dialogue import Dialogue
from privpoi.prompting.parsers import parse_pair_list, parse_temporal_map
from privpoi.prompting.templates import ASPECT_WORDS, PREFERENCE_TYPES, render

log = logging.getLogger('privpoi')

__all__ = [
    'DISTRIBUTION_KINDS',
    'NEIGHBOR_KINDS',
    'CheckinDistribution',
    'NeighborSet',
    'build_distribution',
    'privatize_distribution',
    'collect_distributions',
    'nearest_neighbor',
    'social_neighbors',
    'find_neighbors',
    'summarize_neighbor_preferences',
]

# Distribution kind -> sequence view it is counted over.
DISTRIBUTION_KINDS = ('region', 'category')
NEIGHBOR_KINDS = ('geographical', 'semantic', 'social')


@dataclass(frozen=True, eq=False)
class CheckinDistribution:
    """Smoothed check-in distribution of one user over a vocabulary."""
    probs: np.ndarray
    vocabulary: tuple = ()
    user_id: str = ''
    kind: str = ''

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("A distribution needs a non-empty vector")
        object.__setattr__(self, 'probs', probs)

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class NeighborSet:
    """One geographical, one semantic and up to a few social neighbors."""
    user_id: str
    geographical: Optional[str] = None
    semantic: Optional[str] = None
    social: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.user_id in (self.geographical, self.semantic, *self.social):
            raise ValueError(f"User {self.user_id} cannot be their own neighbor")

    def is_empty(self) -> bool:
        return self.geographical is None and self.semantic is None and not self.social

    def to_dict(self) -> dict[str, Any]:
        return {
            'geographical': self.geographical,
            'semantic': self.semantic,
            'social': list(self.social),
        }


## Distributions ------------------------------------------------------------#
def build_distribution(
    tokens: Iterable,
    vocabulary: Sequence,
    alpha: float = 1e-6,
    user_id: str = '',
    kind: str = '',
) -> CheckinDistribution:
    """Empirical token frequencies, smoothed by `alpha` and renormalized.

    An empty token sequence yields the uniform distribution.
    """
    if not len(vocabulary):
        raise ValueError("vocabulary must not be empty")
    pos = {v: i for i, v in enumerate(vocabulary)}
    counts = np.zeros(len(vocabulary), dtype=np.float64)
    for token in tokens:
        try:
            counts[pos[token]] += 1.0
        except KeyError as e:
            raise ValueError(f"Token {token!r} is not in the vocabulary") from e

    if counts.sum() == 0:
        probs = np.full(len(vocabulary), 1.0 / len(vocabulary))
    else:
        probs = smooth_distribution(counts / counts.sum(), alpha)
    return CheckinDistribution(probs, tuple(vocabulary), user_id, kind)


def privatize_distribution(
    dist: CheckinDistribution,
    epsilon: float,
    rng: np.random.Generator,
    sensitivity: float = 1.0,
    alpha: float = 1e-6,
) -> CheckinDistribution:
    """Laplace-perturb, then clamp, smooth and renormalize."""
    noisy = laplace_perturb(dist.probs, epsilon, rng, sensitivity=sensitivity)
    return CheckinDistribution(
        smooth_distribution(noisy, alpha), dist.vocabulary, dist.user_id, dist.kind,
    )


def collect_distributions(
    views: Mapping[str, SequenceViews],
    catalog: PoiCatalog,
    privacy: Optional[PrivacyConfig] = None,
    seed: int = 0,
    alpha: float = 1e-6,
) -> dict[str, dict[str, CheckinDistribution]]:
    """Regional and categorical distributions of every user.

    With `privacy` set, each user perturbs their own distributions with the
    Laplace mechanism from an independent seeded stream.

    Returns
    -------
    dict
        user id -> {'region': ..., 'category': ...}.
    """
    out = {}
    for i, user_id in enumerate(sorted(views)):
        days = views[user_id].days
        regions = [r for d in days for r in d.regions]
        categories = [c for d in days for c in d.categories]
        dists = {
            'region': build_distribution(regions, catalog.regions, alpha, user_id, 'region'),
            'category': build_distribution(categories, catalog.categories, alpha, user_id, 'category'),
        }
        if privacy is not None:
            rng = derive_rng(seed, 'distributions', i)
            dists = {
                kind: privatize_distribution(
                    d, privacy.epsilon, rng, privacy.laplace_sensitivity, alpha,
                )
                for kind, d in dists.items()
            }
        out[user_id] = dists
    return out


## Neighbor selection -------------------------------------------------------#
def nearest_neighbor(
    query: str,
    distributions: Mapping[str, CheckinDistribution],
    candidates: Iterable[str],
) -> str:
    """Candidate minimizing KL(query || candidate); ties go to the smallest id.

    Raises
    ------
    ValueError
        If no candidate other than `query` is given.
    """
    pool = sorted({c for c in candidates if c != query})
    if not pool:
        raise ValueError(f"No neighbor candidates for user {query}")
    p = distributions[query].probs
    qs = np.stack([distributions[c].probs for c in pool])
    scores = kl_to_many(p, qs).numpy()
    return pool[int(np.argmin(scores))]


def social_neighbors(graph: SocialGraph, user_id: str) -> list[str]:
    """Friends of `user_id` in the (flipped) social graph, sorted."""
    if user_id not in graph.users:
        return []
    return list(graph.neighbors(user_id))


def find_neighbors(
    user_id: str,
    distributions: Mapping[str, Mapping[str, CheckinDistribution]],
    graph: SocialGraph,
    participants: Iterable[str],
    kinds: Sequence[str] = NEIGHBOR_KINDS,
    social_cap: int = 3,
) -> NeighborSet:
    """Neighbors of `user_id` among KB participants.

    Parameters
    ----------
    user_id
        Query user.
    distributions
        Per-user {'region', 'category'} distributions.
    graph
        Flipped social graph.
    participants
        Users with stored preferences.
    kinds
        Neighbor kinds to retrieve.
    social_cap
        Maximum number of social neighbors.
    """
    pool = sorted(u for u in set(participants) if u != user_id and u in distributions)
    geographical = semantic = None
    if pool and user_id in distributions:
        if 'geographical' in kinds:
            regional = {u: d['region'] for u, d in distributions.items()}
            geographical = nearest_neighbor(user_id, regional, pool)
        if 'semantic' in kinds:
            categorical = {u: d['category'] for u, d in distributions.items()}
            semantic = nearest_neighbor(user_id, categorical, pool)
    social: tuple[str, ...] = ()
    if 'social' in kinds:
        members = set(pool)
        social = tuple(u for u in social_neighbors(graph, user_id) if u in members)[:social_cap]
    return NeighborSet(user_id, geographical, semantic, social)


## Summarization ------------------------------------------------------------#
def _kind_text(prefs: Sequence[FineGrainedPreferences], preference: str) -> str:
    texts = []
    for p in prefs:
        text = p.get(preference).to_text()
        if text != 'none' and text not in texts:
            texts.append(text)
    return ', '.join(texts) if texts else 'none'


def summarize_neighbor_preferences(
    neighbors: NeighborSet,
    kb: PreferenceKB,
    client: LlmClient,
    system: Optional[str] = None,
    llm_config: Optional[dict[str, Any]] = None,
) -> FineGrainedPreferences:
    """Summarize the neighbors' preferences, one LLM call per type.

    Missing neighbor kinds are rendered as 'none'. A type that no neighbor
    has is not asked about, and a reply that never parses leaves the type
    empty. Without any stored neighbor the result is empty.
    """
    by_kind = {
        'geographical': [kb.get(neighbors.geographical)] if neighbors.geographical else [],
        'semantic': [kb.get(neighbors.semantic)] if neighbors.semantic else [],
        'social': [kb.get(u) for u in neighbors.social],
    }
    by_kind = {k: [p for p in v if p is not None] for k, v in by_kind.items()}
    if not any(by_kind.values()):
        log.info(f"No stored neighbor preferences for user {neighbors.user_id}")
        return FineGrainedPreferences.empty()

    summary = FineGrainedPreferences.empty(neighbors=neighbors.to_dict())
    for preference in PREFERENCE_FIELDS:
        aspect, kind = PREFERENCE_TYPES[preference]
        texts = {k: _kind_text(v, preference) for k, v in by_kind.items()}
        if all(t == 'none' for t in texts.values()):
            continue

        noun, plural, adjective, _ = ASPECT_WORDS[aspect]
        if kind == 'transition':
            hint, parser = f"{{{noun}-{noun},...}}", parse_pair_list
        else:
            hint, parser = f"{{time: [{plural}]}}", parse_temporal_map
        prompt = render('p5_summarize', {
            'preference': f"{adjective} {kind}",
            'format': hint,
            **texts,
        })
        dialogue = Dialogue(client, system=system, config=llm_config)
        try:
            parsed = dialogue.ask(prompt, f"P5:{preference}", parser, hint)
        except ParseError:
            continue
        if kind == 'transition':
            summary = summary.with_aspect(aspect, transition=parsed)
        else:
            summary = summary.with_aspect(aspect, temporal=parsed)
    return summary
