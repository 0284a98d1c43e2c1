"""
Test the local differential privacy mechanisms and the release of sequence
views.

Tests will run with pytest when pushed to remote, and can also be run manually
with:
    pytest tests/test_privacy.py
"""
import math

import numpy as np
import pytest
from scipy import stats

from privpoi.core.calc.geo import SpatialIndex, haversine
from privpoi.core.utils.errors import ConfigError
from privpoi.data.corpus import PoiEntry, SocialGraph, derive_aux_sequences
from privpoi.privacy import (DEFAULT_DISTANCE_BINS, OneHotRecord,
                             PrivacyConfig, ReleasedDay, cold_bit_probability,
                             decode_perturbed, distance_bin_index,
                             distance_bin_labels, flip_social_links,
                             fuzzify_poi, fuzzify_poi_with_trace,
                             laplace_perturb, oue_perturb, perturb_sequences,
                             perturb_tokens, random_flip, release_day)


## Config -------------------------------------------------------------------#
def test_randomized_response_defaults():
    config = PrivacyConfig(epsilon=1.0)
    assert config.flip_p == pytest.approx(math.e / (math.e + 1))
    assert config.flip_q == pytest.approx(1 / (math.e + 1))
    assert config.flip_p / config.flip_q == pytest.approx(math.e)


def test_large_epsilon_stays_finite():
    config = PrivacyConfig(epsilon=800.0)
    assert config.flip_p == 1.0
    assert 0.0 <= config.flip_q < 1e-300


@pytest.mark.parametrize('kwargs', [
    {'epsilon': 0.0},
    {'epsilon': -1.0},
    {'epsilon': float('inf')},
    {'epsilon': 1.0, 'flip_p': 0.2, 'flip_q': 0.5},
    {'epsilon': 0.1, 'flip_p': 0.9, 'flip_q': 0.1},
    {'h_min': 10, 'h_max': 5},
    {'radius_bounds': (30.0, 10.0)},
    {'distance_bins': (1.0, 1.0)},
    {'max_retries': -1},
])
def test_invalid_privacy_config(kwargs):
    with pytest.raises(ConfigError):
        PrivacyConfig(**kwargs)


def test_identity_flip_is_allowed(caplog):
    with caplog.at_level('WARNING', logger='privpoi'):
        config = PrivacyConfig(epsilon=0.5, flip_p=1.0, flip_q=0.0)
    assert config.flip_p == 1.0
    assert 'not private' in caplog.text


def test_config_dict_and_with_epsilon():
    config = PrivacyConfig.from_dict({'epsilon': 0.5, 'unknown': 3, 'distance_bins': [1, 2]})
    assert config.distance_bins == (1.0, 2.0)
    assert PrivacyConfig.from_dict(config.to_dict()) == config

    moved = config.with_epsilon(2.0)
    assert moved.epsilon == 2.0
    assert moved.flip_p == pytest.approx(1 / (1 + math.exp(-2.0)))
    fixed = PrivacyConfig(epsilon=2.0, flip_p=0.5, flip_q=0.25).with_epsilon(1.0)
    assert (fixed.flip_p, fixed.flip_q) == (0.5, 0.25)


## Mechanisms ---------------------------------------------------------------#
def test_one_hot_record():
    assert OneHotRecord(4, 2).to_bits().tolist() == [0, 0, 1, 0]
    with pytest.raises(ValueError):
        OneHotRecord(4, 4)


@pytest.mark.slow
@pytest.mark.parametrize('epsilon', [0.1, 1.0, 3.0])
def test_oue_bit_rates(epsilon):
    n, size, hot = 100_000, 6, 2
    bits = np.zeros((n, size), dtype=np.uint8)
    bits[:, hot] = 1
    noisy = oue_perturb(bits, epsilon, np.random.default_rng(11))

    assert noisy.shape == bits.shape and noisy.dtype == np.uint8
    hot_count = int(noisy[:, hot].sum())
    assert stats.binomtest(hot_count, n, 0.5).pvalue > 1e-4
    q = cold_bit_probability(epsilon)
    for col in (0, 5):
        assert stats.binomtest(int(noisy[:, col].sum()), n, q).pvalue > 1e-4


def _within_sigmas(count, n, p, sigmas=3.0):
    return abs(count / n - p) <= sigmas * math.sqrt(p * (1.0 - p) / n)


@pytest.mark.slow
@pytest.mark.parametrize('epsilon', [0.1, 0.5, 1.0])
def test_oue_bit_rates_on_a_large_vocabulary(epsilon):
    n, size, hot = 100_000, 50, 17
    bits = np.zeros((n, size), dtype=np.uint8)
    bits[:, hot] = 1
    noisy = oue_perturb(bits, epsilon, np.random.default_rng(21))

    assert _within_sigmas(int(noisy[:, hot].sum()), n, 0.5)
    cold = int(noisy.sum()) - int(noisy[:, hot].sum())
    assert _within_sigmas(cold, n * (size - 1), cold_bit_probability(epsilon))


@pytest.mark.slow
def test_oue_cold_bits_vanish_under_large_budget():
    bits = np.zeros((100_000, 4), dtype=np.uint8)
    bits[:, 0] = 1
    noisy = oue_perturb(bits, 50.0, np.random.default_rng(3))
    assert noisy[:, 1:].mean() < 1e-4
    assert cold_bit_probability(0.1) == pytest.approx(0.47502, abs=1e-5)


def test_oue_rejects_non_one_hot():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        oue_perturb(np.array([1, 1, 0]), 1.0, rng)
    with pytest.raises(ValueError):
        oue_perturb(np.array([0, 2, 0]), 1.0, rng)


def test_decode_perturbed():
    rng = np.random.default_rng(5)
    picks = [decode_perturbed(np.array([0, 1, 0, 1]), rng) for _ in range(2000)]
    assert set(picks) == {1, 3}
    assert abs(picks.count(1) - 1000) < 150
    empty = [decode_perturbed(np.zeros(3, dtype=np.uint8), rng) for _ in range(600)]
    assert set(empty) == {0, 1, 2}


def test_perturb_tokens_resamples_empty_reports():
    rng = np.random.default_rng(2)
    tokens = list(rng.integers(0, 20, size=4000))
    kept = PrivacyConfig(epsilon=10.0)
    out = perturb_tokens(tokens, 20, kept, np.random.default_rng(3))
    assert np.mean(np.array(out) == np.array(tokens)) > 0.99

    dropped = PrivacyConfig(epsilon=10.0, oue_resample_empty=False)
    out = perturb_tokens(tokens, 20, dropped, np.random.default_rng(3))
    agreement = np.mean(np.array(out) == np.array(tokens))
    assert 0.45 < agreement < 0.6


@pytest.mark.slow
@pytest.mark.parametrize('epsilon', [0.1, 1.0])
def test_laplace_noise_distribution(epsilon):
    p = np.full(10, 0.1)
    rng = np.random.default_rng(9)
    draws = np.stack([laplace_perturb(p, epsilon, rng) for _ in range(10_000)])
    noise = (draws - p).ravel()
    result = stats.kstest(noise, 'laplace', args=(0.0, 1.0 / epsilon))
    assert result.pvalue > 0.01
    assert np.var(noise) == pytest.approx(2.0 / epsilon**2, rel=0.05)
    # Unbiased per coordinate.
    sigma = math.sqrt(2.0) / epsilon / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - p) <= 3.5 * sigma)


def test_laplace_rejects_non_distribution():
    with pytest.raises(ValueError):
        laplace_perturb(np.array([0.5, 0.6]), 1.0, np.random.default_rng(0))


@pytest.mark.slow
def test_social_flip_rates():
    rng = np.random.default_rng(4)
    users = [f'u{i:03d}' for i in range(200)]
    pairs = [(users[i], users[j]) for i in range(200) for j in range(i + 1, 200) if rng.random() < 0.1]
    graph = SocialGraph.from_pairs(users, pairs)
    config = PrivacyConfig(epsilon=3.0, flip_p=0.8, flip_q=0.1)

    flipped = flip_social_links(graph, config, np.random.default_rng(6))
    n_pairs = 200 * 199 // 2
    kept = len(graph.edges & flipped.edges)
    created = len(flipped.edges - graph.edges)
    assert stats.binomtest(kept, len(graph.edges), 0.8).pvalue > 1e-4
    assert stats.binomtest(created, n_pairs - len(graph.edges), 0.1).pvalue > 1e-4
    assert flipped.users == graph.users
    assert all(a < b for a, b in flipped.edges)


@pytest.mark.slow
def test_social_flip_rates_at_the_default_response():
    rng = np.random.default_rng(40)
    users = [f'u{i:03d}' for i in range(500)]
    upper = np.triu(rng.random((500, 500)) < 0.05, k=1)
    graph = SocialGraph.from_pairs(users, [(users[i], users[j]) for i, j in zip(*np.nonzero(upper))])
    config = PrivacyConfig(epsilon=0.5)
    assert config.flip_p / config.flip_q <= math.exp(0.5) + 1e-9
    assert config.flip_q == pytest.approx(0.377541, abs=1e-6)

    flipped = flip_social_links(graph, config, np.random.default_rng(41))
    n_pairs = 500 * 499 // 2
    kept = len(graph.edges & flipped.edges)
    created = len(flipped.edges - graph.edges)
    assert _within_sigmas(kept, len(graph.edges), config.flip_p)
    assert _within_sigmas(created, n_pairs - len(graph.edges), config.flip_q)


def test_social_flip_identity():
    graph = SocialGraph.from_pairs(['a', 'b', 'c'], [('a', 'b')])
    config = PrivacyConfig(epsilon=1.0, flip_p=1.0, flip_q=0.0)
    assert flip_social_links(graph, config, np.random.default_rng(0)) == graph


def test_random_flip_rate():
    rng = np.random.default_rng(8)
    flips = [random_flip(1.0, rng) for _ in range(20_000)]
    assert stats.binomtest(sum(flips), len(flips), 1 / (math.e + 1)).pvalue > 1e-4


## Fuzzification ------------------------------------------------------------#
def test_fuzzify_trace_invariants(corpus):
    catalog = corpus.catalog
    config = PrivacyConfig(epsilon=1.0)
    rng = np.random.default_rng(12)
    for poi in list(catalog)[::7]:
        trace = fuzzify_poi_with_trace(poi, catalog.index, config, rng)
        chosen = catalog.get(trace.result)
        assert config.h_min <= trace.h <= config.h_max
        assert 10.0 <= trace.radius <= 30.0
        assert 0.0 <= trace.offset < trace.radius
        assert haversine(trace.center, (chosen.lat, chosen.lon)) <= trace.radius
        assert not trace.fallback
        if trace.same_category:
            assert trace.flip == 0 and chosen.category_id == poi.category_id


def test_fuzzify_is_deterministic_per_seed(corpus):
    catalog = corpus.catalog
    config = PrivacyConfig(epsilon=0.1)
    poi = catalog.get('p042')
    a = [fuzzify_poi(poi, catalog.index, config, np.random.default_rng(s)).poi_id for s in range(20)]
    b = [fuzzify_poi(poi, catalog.index, config, np.random.default_rng(s)).poi_id for s in range(20)]
    assert a == b
    assert len(set(a)) > 1


def test_fuzzify_keeps_category_under_large_budget(corpus):
    catalog = corpus.catalog
    config = PrivacyConfig(epsilon=8.0)
    rng = np.random.default_rng(1)
    poi = catalog.get('p007')
    results = [fuzzify_poi(poi, catalog.index, config, rng) for _ in range(200)]
    same = sum(r.category_id == poi.category_id for r in results)
    assert same >= 195


def _synthetic_catalog(n=5000, seed=0):
    """Dense core of 6 categories around NYC plus a sparse ring beyond it."""
    rng = np.random.default_rng(seed)
    categories = ('Cafe', 'Gym', 'Bar', 'Park', 'Office', 'Museum')
    pois = []
    for j in range(n):
        if j % 25 == 0:
            lat, lon = 40.70 + rng.uniform(-0.6, 0.6), -74.00 + rng.uniform(-0.8, 0.8)
        else:
            lat, lon = 40.70 + rng.uniform(-0.15, 0.15), -74.00 + rng.uniform(-0.2, 0.2)
        pois.append(PoiEntry(f'x{j:04d}', categories[j % len(categories)], lat, lon))
    return pois


@pytest.mark.slow
def test_fuzzify_bounds_on_a_large_catalog():
    pois = _synthetic_catalog()
    index = SpatialIndex(pois)
    by_id = {p.poi_id: p for p in pois}
    config = PrivacyConfig(epsilon=1.0)
    rng = np.random.default_rng(30)
    for k in range(10_000):
        poi = pois[(k * 7919) % len(pois)]
        trace = fuzzify_poi_with_trace(poi, index, config, rng)
        assert trace.result in by_id
        result = by_id[trace.result]
        assert 10.0 <= trace.radius <= 30.0
        assert haversine((poi.lat, poi.lon), (result.lat, result.lon)) <= 60.0


@pytest.mark.slow
def test_fuzzify_keeps_category_at_a_huge_budget():
    pois = _synthetic_catalog()
    index = SpatialIndex(pois)
    config = PrivacyConfig(epsilon=50.0)
    rng = np.random.default_rng(31)
    dense = [p for j, p in enumerate(pois) if j % 25]
    same = 0
    for k in range(10_000):
        poi = dense[(k * 104729) % len(dense)]
        same += fuzzify_poi(poi, index, config, rng).category_id == poi.category_id
    assert same > 0.999 * 10_000


@pytest.mark.slow
def test_random_flip_vanishes_under_large_budget():
    rng = np.random.default_rng(13)
    assert sum(random_flip(50.0, rng) for _ in range(100_000)) / 100_000 < 1e-4


## Sequence release ---------------------------------------------------------#
def test_distance_bins():
    labels = distance_bin_labels(DEFAULT_DISTANCE_BINS)
    assert labels == ('<0.5km', '0.5-1km', '1-2km', '2-5km', '5-10km', '10-20km', '>20km')
    assert distance_bin_index(0.0, DEFAULT_DISTANCE_BINS) == 0
    assert distance_bin_index(0.5, DEFAULT_DISTANCE_BINS) == 1
    assert distance_bin_index(1.99, DEFAULT_DISTANCE_BINS) == 2
    assert distance_bin_index(25.0, DEFAULT_DISTANCE_BINS) == 6
    with pytest.raises(ValueError):
        distance_bin_index(-1.0, DEFAULT_DISTANCE_BINS)


def test_release_without_mechanisms_is_exact(corpus):
    views = derive_aux_sequences(corpus.sequences['u2'], corpus.catalog)
    config = PrivacyConfig()
    day = release_day(views.current, corpus.catalog, config, np.random.default_rng(0),
                      perturb=False, fuzzify=False)
    labels = distance_bin_labels(config.distance_bins)
    assert day.pois == views.current.pois
    assert day.categories == views.current.categories
    assert day.regions == views.current.regions
    assert day.distances == tuple(labels[distance_bin_index(d, config.distance_bins)]
                                  for d in views.current.distances)
    assert day.labels('region') == tuple(f"r{r}" for r in views.current.regions)


def test_release_perturbs_within_vocabularies(corpus):
    catalog = corpus.catalog
    views = derive_aux_sequences(corpus.sequences['u5'], catalog)
    config = PrivacyConfig(epsilon=0.1)
    released = perturb_sequences(views, catalog, config, np.random.default_rng(3))
    again = perturb_sequences(views, catalog, config, np.random.default_rng(3))
    assert released == again
    assert len(released.days) == len(views.days)

    labels = set(distance_bin_labels(config.distance_bins))
    changed = 0
    for raw, day in zip(views.days, released.days):
        assert len(day) == len(raw)
        assert day.days == raw.days and day.hours == raw.hours
        assert set(day.categories) <= set(catalog.categories)
        assert set(day.regions) <= set(catalog.regions)
        assert set(day.distances) <= labels
        assert all(p in catalog for p in day.pois)
        changed += sum(a != b for a, b in zip(day.categories, raw.categories))
    assert changed > 0


def test_released_day_slice_and_dict(corpus):
    views = derive_aux_sequences(corpus.sequences['u0'], corpus.catalog)
    day = release_day(views.current, corpus.catalog, PrivacyConfig(), np.random.default_rng(1))
    head = day.slice(0, 3)
    assert len(head) == 3
    assert head.tokens('category') == tuple(zip(day.categories[:3], day.days[:3], day.hours[:3]))
    assert ReleasedDay.from_dict(day.to_dict()) == day
    with pytest.raises(ValueError):
        day.labels('colour')
