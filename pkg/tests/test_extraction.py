"""
Test segment sampling and multitask reflective preference extraction.

Tests will run with pytest when pushed to remote, and can also be run manually
with:
    pytest tests/test_extraction.py
"""
import numpy as np
import pytest

from privpoi.api.pipeline import build_private_state
from privpoi.core.utils.errors import ApiError, ConfigError, ExtractionError
from privpoi.llm.backends import ScriptedBackend
from privpoi.modules.extraction import (CATALOG_PLACEHOLDER, ExtractionConfig,
                                        Segment, extract_population,
                                        extract_user_preferences,
                                        instruction_prompt,
                                        sample_contextual_segments,
                                        sample_recent_segments,
                                        select_participants)
from privpoi.modules.kb import PreferenceKB


@pytest.fixture(scope='module')
def state(corpus):
    return build_private_state(corpus, seed=0)


def _rejecting(request):
    raise ApiError('rejected', status=400)


## Config -------------------------------------------------------------------#
def test_extraction_config():
    config = ExtractionConfig.from_dict({'m': 2, 'aspects': 'distance, category'})
    assert config.aspects == ('category', 'distance')
    assert config.reflection_sources == ('recent', 'history')
    assert ExtractionConfig.from_dict(config.to_dict()) == config
    for bad in ({'m': 0}, {'n': 1}, {'aspects': ('colour',)}, {'reflection_sources': ('future',)}):
        with pytest.raises(ConfigError):
            ExtractionConfig(**bad)


## Segments -----------------------------------------------------------------#
@pytest.mark.parametrize('length, m, n, spans', [
    (5, 1, 5, [(0, 5)]),
    (7, 2, 3, [(1, 4), (4, 7)]),
    (5, 3, 2, [(1, 3), (3, 5)]),
    (3, 4, 5, [(0, 3)]),
    (1, 1, 5, []),
])
def test_recent_segments(length, m, n, spans):
    segments = sample_recent_segments(list(range(length)), m, n)
    assert [(s.start, s.stop) for s in segments] == spans
    assert all(s.source == 'recent' and s.day == -1 for s in segments)


def test_contextual_segments_by_tier_and_recency():
    history = [
        ['a', 'b', 'c', 'd'],
        ['x', 'c', 'e'],
        ['c', 'f'],
        ['e', 'c'],
        ['q', 'z', 'z'],
    ]
    segments = sample_contextual_segments(history, ['q', 'c'], m=5, n=3)
    assert [(s.day, s.start, s.stop, s.tier) for s in segments] == [
        (2, 0, 2, 0),
        (1, 0, 3, 0),
        (0, 1, 4, 0),
        (4, 0, 2, 1),
    ]
    assert all(len(s) >= 2 for s in segments)

    capped = sample_contextual_segments(history, ['q', 'c'], m=2, n=3)
    assert [(s.day, s.start) for s in capped] == [(2, 0), (1, 0)]
    assert sample_contextual_segments(history, ['nowhere'], m=3, n=5) == []


def test_contextual_segments_hold_out_the_next_record():
    rng = np.random.default_rng(7)
    history = [list(rng.choice(list('abcdef'), size=6)) for _ in range(10)]
    current = ['a', 'b']
    for segment in sample_contextual_segments(history, current, m=20, n=4):
        window = history[segment.day][segment.start:segment.stop]
        assert window[-2] == current[-1 - segment.tier]
        assert 2 <= len(window) <= 4


def _contextual_oracle(history, current, m, n):
    """Every anchored window, ranked by tier then recency, first copy kept."""
    found = [
        (tier, -day, -j, day, max(0, j - n + 2), j + 2)
        for tier, anchor in enumerate(reversed(current))
        for day, pois in enumerate(history)
        for j in range(len(pois) - 1)
        if pois[j] == anchor
    ]
    windows = []
    for tier, _, _, day, start, stop in sorted(found):
        if all((w[0], w[1], w[2]) != (day, start, stop) for w in windows):
            windows.append((day, start, stop, tier))
    return windows[:m]


def test_contextual_segments_match_exhaustive_ranking():
    rng = np.random.default_rng(2024)
    alphabet = list('abcdefg')
    for _ in range(100):
        history = [
            list(rng.choice(alphabet, size=int(rng.integers(0, 9))))
            for _ in range(int(rng.integers(0, 12)))
        ]
        current = list(rng.choice(alphabet, size=int(rng.integers(1, 6))))
        m, n = int(rng.integers(1, 7)), int(rng.integers(2, 7))
        segments = sample_contextual_segments(history, current, m, n)
        assert [(s.day, s.start, s.stop, s.tier) for s in segments] == \
            _contextual_oracle(history, current, m, n)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment('recent', -1, 3, 4)
    with pytest.raises(ValueError):
        Segment('tomorrow', -1, 0, 4)


## Extraction ---------------------------------------------------------------#
def test_extract_user_call_counts(state, make_client, scripted_backend):
    user = 'u0'
    prefs = extract_user_preferences(state.released[user], state.raw_days[user], make_client(scripted_backend))
    segments = prefs.metadata['segments']
    assert segments >= 1

    assert scripted_backend.count('P2') == 5
    assert scripted_backend.count('P3') == 3 * segments
    assert scripted_backend.count('P4') == 5 * segments
    assert scripted_backend.count('P2:distance:transition') == 0
    assert not any(t.endswith(':repair') for t in scripted_backend.tags)

    assert prefs.categorical_transition.pairs == (('Cafe', 'Gym'), ('Gym', 'Bar'))
    assert prefs.distance_temporal.as_dict() == {'Morning': ['Cafe'], 'Evening': ['Bar', 'Park']}
    assert scripted_backend.requests[0].messages[0].content == instruction_prompt()
    assert CATALOG_PLACEHOLDER in instruction_prompt()


def test_aspects_run_in_separate_dialogues(state, make_client, scripted_backend):
    extract_user_preferences(state.released['u1'], state.raw_days['u1'], make_client(scripted_backend))
    firsts = [r for r in scripted_backend.requests if len(r.messages) == 2]
    assert [r.tag for r in firsts] == [
        'P2:category:transition', 'P2:region:transition', 'P2:distance:temporal',
    ]
    # Later turns of a dialogue carry its whole history.
    last = scripted_backend.requests[-1]
    assert last.tag.startswith('P4:distance')
    assert all(m.role != 'assistant' or m.content for m in last.messages)


def test_extract_without_reflection(state, make_client, scripted_backend):
    config = ExtractionConfig(reflection_sources=())
    prefs = extract_user_preferences(state.released['u2'], state.raw_days['u2'],
                                     make_client(scripted_backend), config=config)
    assert scripted_backend.count('P2') == 5
    assert scripted_backend.count('P3') == 0
    assert scripted_backend.count('P4') == 0
    assert prefs.metadata['segments'] == 0


def test_extract_single_aspect(state, make_client, scripted_backend):
    config = ExtractionConfig(aspects=('category',), reflection_sources=('recent',))
    prefs = extract_user_preferences(state.released['u3'], state.raw_days['u3'],
                                     make_client(scripted_backend), config=config,
                                     metadata={'epsilon': 0.1})
    assert scripted_backend.count('P2') == 2
    assert scripted_backend.count('P3:category') == 1
    assert not prefs.regional_transition and not prefs.distance_temporal
    assert prefs.metadata['epsilon'] == 0.1


def test_failed_aspect_is_left_empty(state, make_client):
    backend = ScriptedBackend(
        {'P2:region': _rejecting, 'P3': 'Cafe'},
        default=lambda r: '{Cafe-Gym}' if 'transition' in r.tag else '{Mon: [Cafe]}',
    )
    prefs = extract_user_preferences(state.released['u4'], state.raw_days['u4'], make_client(backend))
    assert not prefs.regional_transition and not prefs.regional_temporal
    assert prefs.categorical_transition.pairs == (('Cafe', 'Gym'),)
    assert backend.count('P3:region') == 0


def test_extraction_fails_when_every_aspect_fails(state, make_client):
    backend = ScriptedBackend(default=_rejecting)
    with pytest.raises(ExtractionError):
        extract_user_preferences(state.released['u5'], state.raw_days['u5'], make_client(backend))


def test_misaligned_raw_days(state, make_client, scripted_backend):
    with pytest.raises(ValueError):
        extract_user_preferences(state.released['u0'], state.raw_days['u0'][:-1],
                                 make_client(scripted_backend))


## Population ---------------------------------------------------------------#
def test_select_participants():
    users = [f'u{i}' for i in range(8)]
    chosen = select_participants(users, 0.3, np.random.default_rng(1))
    assert len(chosen) == 3
    assert list(chosen) == sorted(chosen)
    assert chosen == select_participants(users[::-1], 0.3, np.random.default_rng(1))
    assert select_participants(users, 1.0, np.random.default_rng(1)) == tuple(users)
    with pytest.raises(ConfigError):
        select_participants(users, 0.0, np.random.default_rng(1))


def test_extract_population(state, make_client, scripted_backend, tmp_path):
    kb = PreferenceKB(tmp_path / 'kb.ndjson')
    config = ExtractionConfig(reflection_sources=('recent',))
    results = extract_population(state.released, state.raw_days, make_client(scripted_backend), kb,
                                 config=config, participants=['u6', 'u1', 'u3'], jobs=3)
    assert list(results) == ['u1', 'u3', 'u6']
    assert kb.users() == ('u1', 'u3', 'u6')
    assert PreferenceKB(kb.path).get('u3').categorical_transition == results['u3'].categorical_transition
    assert extract_population(state.released, state.raw_days, make_client(scripted_backend),
                              PreferenceKB(), participants=[]) == {}


def test_extract_population_all_failing(state, make_client):
    with pytest.raises(ExtractionError, match='all 2 participants'):
        extract_population(state.released, state.raw_days, make_client(ScriptedBackend(default=_rejecting)),
                           PreferenceKB(), participants=['u0', 'u1'])


def test_kb_file_is_reproducible(state, make_client, reply, tmp_path):
    config = ExtractionConfig(reflection_sources=('recent',))
    paths = []
    for name in ('a', 'b'):
        kb = PreferenceKB(tmp_path / name / 'kb.ndjson')
        extract_population(state.released, state.raw_days,
                           make_client(ScriptedBackend(default=reply)), kb,
                           config=config, participants=['u2', 'u5'], jobs=2)
        paths.append(kb.path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
