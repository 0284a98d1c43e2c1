"""
Test check-in distributions, neighbor retrieval and neighbor summarization.

Tests will run with pytest when pushed to remote, and can also be run manually
with:
    pytest tests/test_neighbors.py
"""
import numpy as np
import pytest

from privpoi.core.calc.divergence import kl_divergence
from privpoi.data.corpus import SocialGraph, derive_aux_sequences
from privpoi.llm.backends import ScriptedBackend
from privpoi.modules.kb import FineGrainedPreferences, PreferenceKB
from privpoi.modules.neighbors import (CheckinDistribution, NeighborSet,
                                       build_distribution,
                                       collect_distributions, find_neighbors,
                                       nearest_neighbor,
                                       summarize_neighbor_preferences)
from privpoi.privacy.config import PrivacyConfig
from privpoi.prompting.parsers import TemporalPrefs, TransitionPrefs


def _dists(table):
    return {
        u: {
            'region': CheckinDistribution(np.array(p), ('r1', 'r2'), u, 'region'),
            'category': CheckinDistribution(np.array(p[::-1]), ('A', 'B'), u, 'category'),
        }
        for u, p in table.items()
    }


DISTS = _dists({
    'a': [0.5, 0.5],
    'b': [0.25, 0.75],
    'c': [0.45, 0.55],
    'd': [0.9, 0.1],
})


def test_build_distribution():
    dist = build_distribution(['x', 'y', 'x', 'x'], ('x', 'y', 'z'), alpha=1e-6)
    assert dist.probs.sum() == pytest.approx(1.0)
    assert dist.probs[0] == pytest.approx(0.75, abs=1e-5)
    assert (dist.probs > 0).all()
    uniform = build_distribution([], ('x', 'y'))
    np.testing.assert_allclose(uniform.probs, [0.5, 0.5])
    with pytest.raises(ValueError):
        build_distribution(['w'], ('x', 'y'))


def test_nearest_neighbor_matches_brute_force():
    rng = np.random.default_rng(21)
    users = [f'u{i:02d}' for i in range(30)]
    dists = {u: CheckinDistribution(rng.dirichlet(np.ones(8))) for u in users}
    for u in users:
        expected = min((v for v in users if v != u), key=lambda v: kl_divergence(dists[u].probs, dists[v].probs))
        assert nearest_neighbor(u, dists, users) == expected


def test_nearest_neighbor_ties_and_errors():
    dists = {k: v['region'] for k, v in _dists({'a': [0.5, 0.5], 'c': [0.3, 0.7], 'b': [0.3, 0.7]}).items()}
    assert nearest_neighbor('a', dists, ['c', 'b']) == 'b'
    with pytest.raises(ValueError):
        nearest_neighbor('a', dists, ['a'])


def test_find_neighbors_among_participants():
    graph = SocialGraph.from_pairs(list(DISTS), [('a', 'b'), ('a', 'c'), ('a', 'd')])
    found = find_neighbors('a', DISTS, graph, participants=['b', 'c', 'd'])
    assert found.geographical == 'c'
    assert found.semantic == 'c'
    assert found.social == ('b', 'c', 'd')

    found = find_neighbors('a', DISTS, graph, participants=['a', 'b', 'd'], social_cap=1)
    assert found.geographical == 'b'
    assert found.social == ('b',)

    found = find_neighbors('a', DISTS, graph, participants=['b', 'd'], kinds=('social',))
    assert found.geographical is None and found.semantic is None
    assert found.social == ('b', 'd')

    assert find_neighbors('a', DISTS, graph, participants=[]).is_empty()


def test_neighbor_set_rejects_self():
    with pytest.raises(ValueError):
        NeighborSet('a', geographical='a')


def test_collect_distributions(corpus):
    views = {u: derive_aux_sequences(corpus.sequences[u], corpus.catalog) for u in corpus.users}
    raw = collect_distributions(views, corpus.catalog)
    assert set(raw) == set(corpus.users)
    regions = [r for d in views['u0'].days for r in d.regions]
    expected = build_distribution(regions, corpus.catalog.regions)
    np.testing.assert_allclose(raw['u0']['region'].probs, expected.probs)
    assert len(raw['u0']['category']) == len(corpus.catalog.categories)

    privacy = PrivacyConfig(epsilon=0.5)
    noisy = collect_distributions(views, corpus.catalog, privacy, seed=4)
    again = collect_distributions(views, corpus.catalog, privacy, seed=4)
    other = collect_distributions(views, corpus.catalog, privacy, seed=5)
    for u in corpus.users:
        probs = noisy[u]['region'].probs
        assert probs.sum() == pytest.approx(1.0) and (probs > 0).all()
        np.testing.assert_array_equal(probs, again[u]['region'].probs)
    assert not np.array_equal(noisy['u0']['region'].probs, other['u0']['region'].probs)


def _categorical_only():
    return FineGrainedPreferences(
        categorical_transition=TransitionPrefs((('Cafe', 'Gym'),)),
        categorical_temporal=TemporalPrefs((('Morning', ('Cafe',)),)),
    )


def test_summarize_asks_only_about_present_types(make_client, scripted_backend):
    kb = PreferenceKB()
    kb.put('b', _categorical_only())
    client = make_client(scripted_backend)
    summary = summarize_neighbor_preferences(NeighborSet('a', geographical='b'), kb, client)

    assert scripted_backend.tags == ['P5:categorical_transition', 'P5:categorical_temporal']
    assert summary.categorical_transition.pairs == (('Cafe', 'Gym'), ('Gym', 'Bar'))
    assert summary.categorical_temporal.as_dict() == {'Morning': ['Cafe'], 'Evening': ['Bar', 'Park']}
    assert not summary.regional_transition
    assert summary.metadata['neighbors']['geographical'] == 'b'

    prompt = scripted_backend.requests[0].messages[-1].content
    assert "geographical neighbors' categorical transition preferences are {Cafe-Gym}" in prompt
    assert "social neighbors' categorical transition preferences are {none}" in prompt


def test_summarize_without_stored_neighbors(make_client, scripted_backend):
    client = make_client(scripted_backend)
    summary = summarize_neighbor_preferences(NeighborSet('a', semantic='ghost'), PreferenceKB(), client)
    assert summary.is_empty()
    assert scripted_backend.requests == []


def test_summarize_skips_unparseable_type(make_client):
    backend = ScriptedBackend({'P5:categorical_transition': 'no idea', 'P5': '{Noon: [Cafe]}'})
    kb = PreferenceKB()
    kb.put('b', _categorical_only())
    summary = summarize_neighbor_preferences(NeighborSet('a', social=('b',)), kb, make_client(backend))
    assert not summary.categorical_transition
    assert summary.categorical_temporal.as_dict() == {'Noon': ['Cafe']}
    assert backend.tags.count('P5:categorical_transition:repair') == 1
