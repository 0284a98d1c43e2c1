"""
Pipeline entry points: preprocessing, the on-device release of every user's
data, and population-wide preference extraction.

Note: If adding new public methods, please add them to __all__
at the top of the file and in api/__init__.py.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from privpoi.core.utils.errors import DatasetError
from privpoi.core.utils.io import dump_json, load_json, read_ndjson, write_ndjson
from privpoi.core.utils.utils import derive_rng
from privpoi.data.corpus import (Corpus, DatasetSplit, EvalInstance,
                                 SocialGraph, build_corpus,
                                 chronological_split, day_view,
                                 derive_aux_sequences)
from privpoi.data.store import save_corpus
from privpoi.llm.client import LlmClient
from privpoi.modules.extraction import extract_population, select_participants
from privpoi.modules.kb import FineGrainedPreferences, PreferenceKB
from privpoi.modules.neighbors import CheckinDistribution, collect_distributions
from privpoi.modules.recommender import PipelineSwitches
from privpoi.privacy.config import PrivacyConfig
from privpoi.privacy.mechanisms import flip_social_links
from privpoi.privacy.sequences import (ReleasedDay, ReleasedViews,
                                       perturb_sequences, release_day)

log = logging.getLogger('privpoi')

__all__ = [
    'PipelineState',
    'preprocess',
    'build_private_state',
    'release_context',
    'extract',
    'save_private_state',
    'load_private_state',
]

STATE_SCHEMA_VERSION = 1


@dataclass(eq=False)
class PipelineState:
    """Everything the server side holds after users released their data.

    `released` and `raw_days` cover the training days only; `raw_days`
    stays on the user's side and is used for contextual segment selection.
    """
    corpus: Corpus
    split: DatasetSplit
    privacy: PrivacyConfig
    switches: PipelineSwitches
    seed: int
    released: dict[str, ReleasedViews]
    raw_days: dict[str, tuple[tuple[str, ...], ...]]
    distributions: dict[str, dict[str, CheckinDistribution]]
    graph: SocialGraph
    participants: tuple[str, ...]
    kb: PreferenceKB = field(default_factory=PreferenceKB)

    @property
    def users(self) -> tuple[str, ...]:
        return self.split.users


def preprocess(
    checkin_path: Union[Path, str],
    poi_path: Union[Path, str],
    social_path: Optional[Union[Path, str]] = None,
    config: Optional[dict[str, Any]] = None,
    out_dir: Optional[Union[Path, str]] = None,
) -> Corpus:
    """Build the corpus from raw TSV dumps, optionally saving it."""
    corpus = build_corpus(checkin_path, poi_path, social_path, config=config)
    stats = corpus.statistics()
    log.info(
        f"Corpus: {stats['users']} users, {stats['pois']} POIs, "
        f"{stats['checkins']} check-ins, density {stats['density']:.4f}",
    )
    if out_dir is not None:
        save_corpus(corpus, out_dir)
    return corpus


def build_private_state(
    corpus: Corpus,
    privacy: Optional[PrivacyConfig] = None,
    switches: Optional[PipelineSwitches] = None,
    seed: int = 0,
    participation: float = 1.0,
    alpha: float = 1e-6,
) -> PipelineState:
    """Split the corpus and release every user's training data.

    Each user draws from their own seeded stream, so the release of one user
    does not depend on the others.

    Parameters
    ----------
    corpus
        Preprocessed corpus.
    privacy
        Privacy parameters.
    switches
        Which mechanisms are applied.
    seed
        Master seed.
    participation
        Fraction of users whose preferences go into the KB.
    alpha
        Smoothing of the check-in distributions.
    """
    privacy = privacy or PrivacyConfig()
    switches = switches or PipelineSwitches()
    split = chronological_split(corpus.sequences)
    catalog = corpus.catalog

    views, released, raw_days = {}, {}, {}
    for i, user_id in enumerate(split.users):
        sequences = split.training_sequences(user_id)
        views[user_id] = derive_aux_sequences(sequences, catalog)
        released[user_id] = perturb_sequences(
            views[user_id],
            catalog,
            privacy,
            derive_rng(seed, 'release', i),
            perturb=switches.perturb_sequences,
            fuzzify=switches.fuzzify_pois,
        )
        raw_days[user_id] = tuple(tuple(r.poi_id for r in day) for day in sequences.days)

    if switches.perturb_distributions:
        distributions = collect_distributions(views, catalog, privacy, seed=seed, alpha=alpha)
        graph = flip_social_links(corpus.social, privacy, derive_rng(seed, 'social'))
    else:
        distributions = collect_distributions(views, catalog, None, seed=seed, alpha=alpha)
        graph = corpus.social

    participants = select_participants(
        split.users, participation, derive_rng(seed, 'participation'),
    )
    log.info(
        f"Released data of {len(released)} users at epsilon={privacy.epsilon} "
        f"({len(participants)} participants)",
    )
    return PipelineState(
        corpus=corpus,
        split=split,
        privacy=privacy,
        switches=switches,
        seed=seed,
        released=released,
        raw_days=raw_days,
        distributions=distributions,
        graph=graph,
        participants=participants,
    )


def release_context(
    state: PipelineState,
    instance: EvalInstance,
    rng: np.random.Generator,
) -> ReleasedDay:
    """Release the context of an evaluation instance as its user would."""
    return release_day(
        day_view(instance.context, state.corpus.catalog),
        state.corpus.catalog,
        state.privacy,
        rng,
        perturb=state.switches.perturb_sequences,
        fuzzify=state.switches.fuzzify_pois,
    )


def extract(
    state: PipelineState,
    client: LlmClient,
    kb: Optional[PreferenceKB] = None,
    config: Optional[dict[str, Any]] = None,
    llm_config: Optional[dict[str, Any]] = None,
    jobs: int = 1,
) -> dict[str, FineGrainedPreferences]:
    """Extract the preferences of all participants into `kb`.

    Parameters
    ----------
    state
        Released pipeline state; its KB is replaced by `kb` when given.
    client
        Shared LLM client.
    kb
        Target knowledge base.
    config
        Segment settings m and n.
    llm_config
        Dialogue settings.
    jobs
        Worker threads.
    """
    config = config or {}
    if kb is not None:
        state.kb = kb
    if not state.switches.aspects:
        log.info("Multitask probing is disabled; nothing to extract")
        return {}

    extraction = state.switches.extraction_config(
        m=int(config.get('m', 1)), n=int(config.get('n', 5)),
    )
    return extract_population(
        state.released,
        state.raw_days,
        client,
        state.kb,
        config=extraction,
        llm_config=llm_config,
        participants=state.participants,
        jobs=jobs,
        metadata={'epsilon': state.privacy.epsilon, 'private': state.switches.private},
    )


## Persistence --------------------------------------------------------------#
def save_private_state(state: PipelineState, directory: Union[Path, str]) -> Path:
    """Write the released data (never the raw days) into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_ndjson(directory / 'released.ndjson', (
        {
            'user_id': user_id,
            'days': [day.to_dict() for day in views.days],
        }
        for user_id, views in sorted(state.released.items())
    ))
    write_ndjson(directory / 'distributions.ndjson', (
        {
            'user_id': user_id,
            **{kind: d.probs.tolist() for kind, d in sorted(dists.items())},
        }
        for user_id, dists in sorted(state.distributions.items())
    ))
    write_ndjson(directory / 'social.ndjson', (
        {'a': a, 'b': b} for a, b in sorted(state.graph.edges)
    ))
    dump_json(directory / 'manifest.json', {
        'schema_version': STATE_SCHEMA_VERSION,
        'seed': state.seed,
        'privacy': state.privacy.to_dict(),
        'switches': state.switches.to_dict(),
        'participants': list(state.participants),
    })
    log.info(f"Saved released state to {directory}")
    return directory


def load_private_state(
    corpus: Corpus,
    directory: Union[Path, str],
    switches: PipelineSwitches,
) -> PipelineState:
    """Read a state written by `save_private_state` for `corpus`."""
    directory = Path(directory)
    manifest = load_json(directory / 'manifest.json')
    if manifest.get('schema_version') != STATE_SCHEMA_VERSION:
        raise DatasetError(
            f"unsupported schema version {manifest.get('schema_version')}",
            path=str(directory / 'manifest.json'),
        )

    split = chronological_split(corpus.sequences)
    catalog = corpus.catalog
    released = {}
    for d in read_ndjson(directory / 'released.ndjson'):
        days = tuple(ReleasedDay.from_dict(day) for day in d['days'])
        released[d['user_id']] = ReleasedViews(d['user_id'], history=days[:-1], current=days[-1])
    if set(released) != set(split.users):
        raise DatasetError("released state does not match the corpus users", path=str(directory))

    vocabularies = {'region': catalog.regions, 'category': catalog.categories}
    distributions = {
        d['user_id']: {
            kind: CheckinDistribution(np.asarray(d[kind]), tuple(vocab), d['user_id'], kind)
            for kind, vocab in vocabularies.items()
        }
        for d in read_ndjson(directory / 'distributions.ndjson')
    }
    edges = [(d['a'], d['b']) for d in read_ndjson(directory / 'social.ndjson')]
    raw_days = {
        user_id: tuple(
            tuple(r.poi_id for r in day) for day in split.training_sequences(user_id).days
        )
        for user_id in split.users
    }
    return PipelineState(
        corpus=corpus,
        split=split,
        privacy=PrivacyConfig.from_dict(manifest['privacy']),
        switches=switches,
        seed=int(manifest['seed']),
        released=released,
        raw_days=raw_days,
        distributions=distributions,
        graph=SocialGraph.from_pairs(split.users, edges),
        participants=tuple(manifest['participants']),
    )
