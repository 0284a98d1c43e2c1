"""
Shared fixtures: a small synthetic city and a scripted LLM.

The city has 120 POIs on a ~1 km lattice and 8 users visiting 20 days of 5
check-ins each. User i cycles through a shuffled block of 30 POIs starting
at POI 15 * i, so every POI belongs to exactly two users' blocks and
survives the default 5-core filter.
"""
import re
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from privpoi.data.corpus import build_corpus
from privpoi.llm.backends import ScriptedBackend
from privpoi.llm.client import LlmClient
from privpoi.llm.types import ChatRequest, ClientPolicy

CATEGORIES = ('Cafe', 'Gym', 'Bar', 'Park', 'Office', 'Museum')
N_POIS = 120
N_USERS = 8
N_DAYS = 20
PER_DAY = 5
SOCIAL_PAIRS = (('u0', 'u1'), ('u1', 'u2'), ('u2', 'u3'), ('u4', 'u5'), ('u6', 'u7'), ('u0', 'u7'))

_CANDIDATES = re.compile(r'candidate POIs \{([^{}]*)\}')


def city_tables(seed: int = 0) -> tuple[list, list, list]:
    """(pois, checkins, social) rows of the synthetic city."""
    rng = np.random.default_rng(seed)
    pois = []
    for j in range(N_POIS):
        lat = 40.70 + 0.009 * (j // 12) + rng.uniform(-0.001, 0.001)
        lon = -74.00 + 0.012 * (j % 12) + rng.uniform(-0.001, 0.001)
        pois.append((f'p{j:03d}', CATEGORIES[j % len(CATEGORIES)], f'{lat:.6f}', f'{lon:.6f}'))

    start = datetime(2024, 1, 1, tzinfo=timezone.utc)  # a Monday
    checkins = []
    for i in range(N_USERS):
        block = [(15 * i + k) % N_POIS for k in range(30)]
        order = [block[k] for k in rng.permutation(len(block))]
        for d in range(N_DAYS):
            for s in range(PER_DAY):
                poi = order[(d * PER_DAY + s) % len(order)]
                ts = start + timedelta(days=d, hours=8 + 3 * s, minutes=7 * i)
                checkins.append((f'u{i}', f'p{poi:03d}', ts.strftime('%Y-%m-%dT%H:%M:%SZ')))
    return pois, checkins, list(SOCIAL_PAIRS)


def write_tsv(path: Path, rows) -> Path:
    path.write_text(''.join('\t'.join(row) + '\n' for row in rows), encoding='utf-8')
    return path


@pytest.fixture(scope='session')
def city_files(tmp_path_factory) -> dict[str, Path]:
    """The synthetic city as raw TSV dumps."""
    root = tmp_path_factory.mktemp('city')
    pois, checkins, social = city_tables()
    return {
        'pois': write_tsv(root / 'pois.tsv', pois),
        'checkins': write_tsv(root / 'checkins.tsv', checkins),
        'social': write_tsv(root / 'social.tsv', social),
    }


@pytest.fixture(scope='session')
def corpus(city_files):
    return build_corpus(city_files['checkins'], city_files['pois'], city_files['social'])


## Scripted LLM -------------------------------------------------------------#
def candidates_of(request: ChatRequest) -> list[str]:
    """Candidate ids listed in the system message."""
    match = _CANDIDATES.search(request.messages[0].content)
    if match is None:
        return []
    return [c.strip() for c in match.group(1).split(',') if c.strip()]


def scripted_reply(request: ChatRequest) -> str:
    """Well-formed answers keyed on the request tag."""
    tag = request.tag
    if tag.startswith('P7'):
        picks = sorted(candidates_of(request))[:10]
        return '\n'.join(f'{p}: near the last check-in;' for p in picks) + '\n[region, category, distance]'
    if tag.startswith('P6:region'):
        return 'r3'
    if tag.startswith('P6:distance'):
        return '1-2km'
    if tag.startswith(('P3', 'P6')):
        return 'Cafe'
    if 'transition' in tag:
        return '{Cafe-Gym, Gym-Bar}'
    return '{Morning: [Cafe], Evening: [Bar, Park]}'


@pytest.fixture
def make_client():
    """Factory of LlmClients over a backend, with a no-op retry sleep."""
    def factory(backend=None, sleeps=None, **policy) -> LlmClient:
        backend = backend if backend is not None else ScriptedBackend(default=scripted_reply)
        sleep = sleeps.append if sleeps is not None else (lambda _: None)
        return LlmClient(backend, ClientPolicy(**policy), sleep=sleep)
    return factory


@pytest.fixture
def scripted_backend() -> ScriptedBackend:
    return ScriptedBackend(default=scripted_reply)


@pytest.fixture(scope='session')
def reply():
    """The scripted reply function, for backends built inside other fixtures."""
    return scripted_reply
