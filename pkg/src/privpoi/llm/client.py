"""
Stateless chat-completion client: bounded concurrency plus retry with
exponential backoff on transient failures.
"""
import logging
import threading
import time
from collections import Counter
from collections.abc import Callable
from typing import Any, Optional

from tenacity import (RetryCallState, Retrying, retry_if_exception_type,
                      stop_after_attempt, wait_exponential)

from privpoi.core.utils.errors import TransportError
from privpoi.llm.types import ChatBackend, ChatRequest, ClientPolicy

log = logging.getLogger('privpoi')

__all__ = [
    'LlmClient',
    'complete',
]


class LlmClient:
    """Shareable client enforcing a ClientPolicy around a backend.

    Parameters
    ----------
    backend
        Production, scripted or replay backend.
    policy
        Timeout, retries, backoff and in-flight bound.
    sleep
        Sleep function used between retries.
    record_transcript
        Keep every (tag, request, response) exchange in `transcript`.
    """
    def __init__(
        self,
        backend: ChatBackend,
        policy: Optional[ClientPolicy] = None,
        sleep: Callable[[float], None] = time.sleep,
        record_transcript: bool = False,
    ) -> None:
        self.backend = backend
        self.policy = policy or ClientPolicy()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(self.policy.max_in_flight)
        self._lock = threading.Lock()
        self.record_transcript = record_transcript
        self.transcript: list[dict[str, Any]] = []
        self.calls: Counter = Counter()
        self.retries = 0

    def _log_retry(self, state: RetryCallState) -> None:
        with self._lock:
            self.retries += 1
        err = state.outcome.exception() if state.outcome else None
        log.warning(
            f"Transient LLM failure on attempt {state.attempt_number}: {err}; "
            f"retrying in {state.next_action.sleep if state.next_action else 0:.1f}s",
        )

    def _attempt(self, request: ChatRequest) -> str:
        # A slot is held per attempt, never across a backoff sleep.
        with self._slots:
            return self.backend.send(request, self.policy.timeout)

    def complete(self, request: ChatRequest) -> str:
        """Send `request`, retrying transient failures; returns assistant text."""
        retrying = Retrying(
            stop=stop_after_attempt(self.policy.max_retries + 1),
            wait=wait_exponential(
                multiplier=self.policy.backoff_base, max=self.policy.backoff_cap,
            ),
            retry=retry_if_exception_type(TransportError),
            sleep=self._sleep,
            before_sleep=self._log_retry,
            reraise=True,
        )
        try:
            text = retrying(self._attempt, request)
        except TransportError as e:
            raise TransportError(
                f"Request '{request.tag}' failed after "
                f"{self.policy.max_retries + 1} attempts: {e}",
            ) from e

        with self._lock:
            self.calls[request.tag] += 1
            if self.record_transcript:
                self.transcript.append({
                    'tag': request.tag,
                    'request': request.to_dict(),
                    'response': text,
                })
        log.debug(f"LLM call {request.tag}: {len(text)} chars")
        return text

    def drain_transcript(self) -> list[dict[str, Any]]:
        """Return and clear the recorded exchanges."""
        with self._lock:
            out, self.transcript = self.transcript, []
        return out


def complete(
    request: ChatRequest,
    backend: ChatBackend,
    policy: Optional[ClientPolicy] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """One-shot completion through a throwaway client."""
    return LlmClient(backend, policy, sleep=sleep).complete(request)
