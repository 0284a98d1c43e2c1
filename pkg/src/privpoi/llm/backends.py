"""
Chat backends: an OpenAI-compatible HTTP backend and a scripted backend for
tests and dry runs.
"""
import logging
import os
import threading
import time
from collections import Counter
from collections.abc import Callable, Mapping, Sequence
from typing import Optional, Union

import openai

from privpoi.core.utils.errors import (ApiError, ConfigError, ReplayMissError,
                                       TransportError)
from privpoi.llm.types import ChatRequest

log = logging.getLogger('privpoi')

__all__ = [
    'API_KEY_ENV',
    'OpenAIBackend',
    'ScriptedBackend',
    'tag_prefixes',
]

API_KEY_ENV = 'LLM_API_KEY'

_RETRYABLE_STATUS = (408, 409, 429)

ScriptEntry = Union[str, Sequence[str], Callable[[ChatRequest], str]]


class OpenAIBackend:
    """OpenAI-compatible chat completions over HTTPS.

    The credential comes from the environment; SDK-level retries are off so
    the client policy alone decides.

    Parameters
    ----------
    base_url
        Endpoint root; None uses the SDK default.
    api_key_env
        Environment variable holding the bearer credential.
    client
        Pre-built SDK client, mainly for tests.
    """
    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key_env: str = API_KEY_ENV,
        client: Optional[openai.OpenAI] = None,
    ) -> None:
        if client is None:
            key = os.environ.get(api_key_env)
            if not key:
                raise ConfigError(f"Environment variable {api_key_env} is not set")
            client = openai.OpenAI(api_key=key, base_url=base_url, max_retries=0)
        self._client = client

    def send(self, request: ChatRequest, timeout: float) -> str:
        try:
            response = self._client.chat.completions.create(
                model=request.model,
                messages=[m.to_dict() for m in request.messages],
                temperature=request.temperature,
                max_tokens=request.max_tokens,
                timeout=timeout,
            )
        except openai.APIConnectionError as e:
            # Includes APITimeoutError.
            raise TransportError(f"{type(e).__name__}: {e}") from e
        except openai.APIStatusError as e:
            if e.status_code >= 500 or e.status_code in _RETRYABLE_STATUS:
                raise TransportError(f"HTTP {e.status_code}: {e.message}") from e
            body = e.body if isinstance(e.body, str) else str(e.body or e.message)
            raise ApiError("Chat completion rejected", status=e.status_code, body=body) from e

        if not response.choices:
            raise ApiError("Chat completion returned no choices", status=200)
        return response.choices[0].message.content or ''


def tag_prefixes(tag: str) -> list[str]:
    """'P4:region:temporal' -> ['P4:region:temporal', 'P4:region', 'P4']."""
    parts = tag.split(':')
    return [':'.join(parts[:i]) for i in range(len(parts), 0, -1)]


class ScriptedBackend:
    """Deterministic backend answering from a tag -> response script.

    A script entry is a string, a list of strings served in order (the last
    one repeats), or a callable of the request. Lookup tries the exact tag,
    then successively shorter ':'-prefixes, then `default`.

    Parameters
    ----------
    script
        Tag to response mapping.
    default
        Response for tags the script does not cover; None raises.
    fail_times
        Number of initial calls that raise `failure` instead of answering.
    failure
        Exception factory for injected failures.
    delay
        Seconds every call blocks, to make concurrency observable.
    """
    def __init__(
        self,
        script: Optional[Mapping[str, ScriptEntry]] = None,
        default: Optional[ScriptEntry] = None,
        fail_times: int = 0,
        failure: Callable[[str], Exception] = TransportError,
        delay: float = 0.0,
    ) -> None:
        self.script = dict(script or {})
        self.default = default
        self.fail_times = fail_times
        self.failure = failure
        self.delay = delay
        self.requests: list[ChatRequest] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._cursor: Counter = Counter()
        self._attempts = 0
        self._lock = threading.Lock()

    def _resolve(self, request: ChatRequest) -> str:
        for prefix in tag_prefixes(request.tag):
            if prefix in self.script:
                key, entry = prefix, self.script[prefix]
                break
        else:
            if self.default is None:
                raise ReplayMissError(f"No scripted response for tag '{request.tag}'")
            key, entry = '', self.default

        if callable(entry):
            return entry(request)
        if isinstance(entry, str):
            return entry
        with self._lock:
            i = min(self._cursor[key], len(entry) - 1)
            self._cursor[key] += 1
        return entry[i]

    def send(self, request: ChatRequest, timeout: float) -> str:
        with self._lock:
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            self._attempts += 1
            attempt = self._attempts
        try:
            if self.delay:
                time.sleep(self.delay)
            if attempt <= self.fail_times:
                raise self.failure(f"injected failure {attempt}/{self.fail_times}")
            text = self._resolve(request)
            with self._lock:
                self.requests.append(request)
            return text
        finally:
            with self._lock:
                self.in_flight -= 1

    def count(self, prefix: str) -> int:
        """Answered requests whose tag equals `prefix` or starts with `prefix:`."""
        return sum(
            1 for r in self.requests if r.tag == prefix or r.tag.startswith(prefix + ':')
        )

    @property
    def tags(self) -> list[str]:
        return [r.tag for r in self.requests]

    def prompts(self) -> list[str]:
        """Every message text sent, system preambles included."""
        return [m.content for r in self.requests for m in r.messages if m.role != 'assistant']
