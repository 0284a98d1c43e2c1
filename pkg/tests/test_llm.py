"""
Test the chat client policy, backends and cassette record/replay.

Tests will run with pytest when pushed to remote, and can also be run manually
with:
    pytest tests/test_llm.py
"""
import threading
from concurrent.futures import ThreadPoolExecutor
from types import SimpleNamespace

import httpx
import openai
import pytest

from privpoi.core.utils.errors import (ApiError, ConfigError, ReplayMissError,
                                       TransportError)
from privpoi.llm import (API_KEY_ENV, CassetteRecorder, ChatMessage,
                         ChatRequest, ClientPolicy, LlmClient, OpenAIBackend,
                         ScriptedBackend, complete, load_cassette,
                         record_cassette, tag_prefixes)


def _request(text='hello', tag='P3:category', **kwargs):
    return ChatRequest(messages=(ChatMessage('user', text),), tag=tag, **kwargs)


## Types --------------------------------------------------------------------#
def test_request_validation():
    with pytest.raises(ValueError):
        ChatMessage('robot', 'hi')
    with pytest.raises(ValueError):
        ChatRequest(messages=())
    with pytest.raises(ValueError):
        _request(temperature=3.0)
    assert ChatRequest.from_dict(_request().to_dict()) == _request()


def test_request_key_ignores_tag_in_hash():
    a, b = _request(tag='P2:region'), _request(tag='P3:region')
    assert a.content_hash() == b.content_hash()
    assert a.key() != b.key()
    assert a.key().startswith('P2:region#')
    assert _request('other').content_hash() != a.content_hash()


@pytest.mark.parametrize('kwargs', [{'max_retries': -1}, {'max_in_flight': 0}, {'timeout': 0}])
def test_invalid_policy(kwargs):
    with pytest.raises(ConfigError):
        ClientPolicy(**kwargs)


def test_policy_from_dict():
    policy = ClientPolicy.from_dict({'max_retries': 5, 'timeout': None, 'model': 'x'})
    assert policy.max_retries == 5
    assert policy.timeout == 60.0
    assert ClientPolicy.from_dict(None) == ClientPolicy()


## Scripted backend ---------------------------------------------------------#
def test_tag_prefixes():
    assert tag_prefixes('P4:region:temporal') == ['P4:region:temporal', 'P4:region', 'P4']
    assert tag_prefixes('P7') == ['P7']


def test_scripted_lookup_order():
    backend = ScriptedBackend({'P4': 'generic', 'P4:region': ['first', 'second']}, default='fallback')
    assert backend.send(_request(tag='P4:region:temporal'), 1.0) == 'first'
    assert backend.send(_request(tag='P4:region:transition'), 1.0) == 'second'
    assert backend.send(_request(tag='P4:region'), 1.0) == 'second'
    assert backend.send(_request(tag='P4:category'), 1.0) == 'generic'
    assert backend.send(_request(tag='P7'), 1.0) == 'fallback'
    assert backend.count('P4') == 4
    assert backend.count('P4:region') == 3
    assert backend.prompts() == ['hello'] * 5


def test_scripted_without_default_raises():
    with pytest.raises(ReplayMissError):
        ScriptedBackend({'P2': 'x'}).send(_request(tag='P3'), 1.0)


## Client -------------------------------------------------------------------#
def test_client_retries_with_backoff(make_client):
    backend = ScriptedBackend(default='ok', fail_times=2)
    sleeps = []
    client = make_client(backend, sleeps=sleeps)
    assert client.complete(_request()) == 'ok'
    assert sleeps == [1.0, 2.0]
    assert client.retries == 2
    assert client.calls['P3:category'] == 1


def test_backoff_is_capped(make_client):
    sleeps = []
    client = make_client(ScriptedBackend(default='ok', fail_times=4), sleeps=sleeps,
                         max_retries=4, backoff_base=2.0, backoff_cap=5.0)
    client.complete(_request())
    assert sleeps == [2.0, 4.0, 5.0, 5.0]


def test_client_gives_up(make_client):
    sleeps = []
    backend = ScriptedBackend(default='ok', fail_times=10)
    client = make_client(backend, sleeps=sleeps, max_retries=2)
    with pytest.raises(TransportError, match='after 3 attempts'):
        client.complete(_request())
    assert len(sleeps) == 2
    assert backend.requests == []


def test_api_errors_are_not_retried(make_client):
    sleeps = []
    backend = ScriptedBackend(default='ok', fail_times=1, failure=lambda m: ApiError(m, status=400))
    with pytest.raises(ApiError):
        make_client(backend, sleeps=sleeps).complete(_request())
    assert sleeps == []


def test_in_flight_bound(make_client):
    backend = ScriptedBackend(default='ok', delay=0.02)
    client = make_client(backend, max_in_flight=2)
    with ThreadPoolExecutor(max_workers=8) as pool:
        replies = list(pool.map(lambda i: client.complete(_request(f'q{i}')), range(16)))
    assert replies == ['ok'] * 16
    assert 1 <= backend.max_in_flight <= 2
    assert backend.in_flight == 0


def test_backoff_releases_the_slot():
    backend = ScriptedBackend(default='ok', fail_times=1)
    finished = []

    def sleep(seconds):
        # Another caller must get through while this request waits to retry.
        other = threading.Thread(target=lambda: finished.append(client.complete(_request('other'))))
        other.start()
        other.join(timeout=5)

    client = LlmClient(backend, ClientPolicy(max_in_flight=1), sleep=sleep)
    assert client.complete(_request()) == 'ok'
    assert finished == ['ok']
    assert backend.max_in_flight == 1


def test_transcript():
    client = LlmClient(ScriptedBackend(default='ok'), record_transcript=True)
    client.complete(_request())
    client.complete(_request(tag='P7'))
    transcript = client.drain_transcript()
    assert [t['tag'] for t in transcript] == ['P3:category', 'P7']
    assert transcript[0]['response'] == 'ok'
    assert client.transcript == []


def test_one_shot_complete():
    assert complete(_request(), ScriptedBackend(default='fine'), sleep=lambda _: None) == 'fine'


## Cassettes ----------------------------------------------------------------#
def test_cassette_record_and_replay(tmp_path):
    recorder = CassetteRecorder(ScriptedBackend({'P2': 'pairs', 'P3': 'label'}))
    live = LlmClient(recorder)
    first = [live.complete(_request('a', 'P2:region')), live.complete(_request('b', 'P3:region'))]
    path = record_cassette(recorder, tmp_path / 'session.ndjson')
    assert len(path.read_text(encoding='utf-8').splitlines()) == 2

    replay = LlmClient(load_cassette(path))
    assert [replay.complete(_request('a', 'P2:region')), replay.complete(_request('b', 'P3:region'))] == first
    with pytest.raises(ReplayMissError):
        replay.complete(_request('c', 'P2:region'))


## OpenAI backend -----------------------------------------------------------#
def _fake_sdk(create):
    return SimpleNamespace(chat=SimpleNamespace(completions=SimpleNamespace(create=create)))


def test_openai_backend_needs_key(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(ConfigError, match=API_KEY_ENV):
        OpenAIBackend()


def test_openai_backend_sends_messages():
    seen = {}

    def create(**kwargs):
        seen.update(kwargs)
        return SimpleNamespace(choices=[SimpleNamespace(message=SimpleNamespace(content='r1'))])

    backend = OpenAIBackend(client=_fake_sdk(create))
    assert backend.send(_request(max_tokens=64), 5.0) == 'r1'
    assert seen['messages'] == [{'role': 'user', 'content': 'hello'}]
    assert seen['max_tokens'] == 64 and seen['timeout'] == 5.0


def test_openai_backend_maps_errors():
    def offline(**kwargs):
        raise openai.APIConnectionError(request=httpx.Request('POST', 'https://llm.invalid/v1'))

    with pytest.raises(TransportError):
        OpenAIBackend(client=_fake_sdk(offline)).send(_request(), 1.0)

    empty = OpenAIBackend(client=_fake_sdk(lambda **kw: SimpleNamespace(choices=[])))
    with pytest.raises(ApiError):
        empty.send(_request(), 1.0)
