"""
Chat-completion request types and the client retry/concurrency policy.
"""
import hashlib
from dataclasses import dataclass, fields
from typing import Any, Optional, Protocol

from privpoi.core.utils.errors import ConfigError
from privpoi.core.utils.io import to_ndjson_line

__all__ = [
    'ROLES',
    'ChatMessage',
    'ChatRequest',
    'ClientPolicy',
    'ChatBackend',
]

ROLES = ('system', 'user', 'assistant')


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"Unknown chat role '{self.role}'")

    def to_dict(self) -> dict[str, str]:
        return {'role': self.role, 'content': self.content}


@dataclass(frozen=True)
class ChatRequest:
    """One stateless chat-completion call.

    The full conversation is resent on every call. `tag` names the prompt the
    request carries (e.g. 'P4:region:temporal') and keys cassettes and
    scripted responses.
    """
    messages: tuple[ChatMessage, ...]
    model: str = 'gpt-3.5-turbo'
    temperature: float = 0.0
    max_tokens: int = 512
    tag: str = ''

    def __post_init__(self) -> None:
        object.__setattr__(self, 'messages', tuple(self.messages))
        if not self.messages:
            raise ValueError("A chat request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            'messages': [m.to_dict() for m in self.messages],
            'model': self.model,
            'temperature': self.temperature,
            'max_tokens': self.max_tokens,
            'tag': self.tag,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> 'ChatRequest':
        return cls(
            messages=tuple(ChatMessage(m['role'], m['content']) for m in d['messages']),
            model=d.get('model', 'gpt-3.5-turbo'),
            temperature=float(d.get('temperature', 0.0)),
            max_tokens=int(d.get('max_tokens', 512)),
            tag=d.get('tag', ''),
        )

    def content_hash(self) -> str:
        """sha256 over the canonical JSON of everything but the tag."""
        body = self.to_dict()
        body.pop('tag')
        return hashlib.sha256(to_ndjson_line(body).encode('utf-8')).hexdigest()

    def key(self) -> str:
        """Cassette key, '<tag>#<content hash>'."""
        return f"{self.tag}#{self.content_hash()}"


@dataclass(frozen=True)
class ClientPolicy:
    """Timeout, retry and concurrency limits of an LlmClient.

    Parameters
    ----------
    timeout
        Per-attempt timeout in seconds.
    max_retries
        Retries after the first attempt for transient failures.
    backoff_base, backoff_cap
        Exponential backoff: base * 2^(attempt-1) seconds, capped.
    max_in_flight
        Upper bound on concurrently outstanding requests.
    """
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_cap: float = 30.0
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.timeout <= 0 or self.backoff_base < 0 or self.backoff_cap < 0:
            raise ConfigError("timeout must be positive and backoff non-negative")

    @classmethod
    def from_dict(cls, config: Optional[dict[str, Any]] = None) -> 'ClientPolicy':
        if config is None:
            return cls()
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in dict(config).items() if k in names and v is not None})


class ChatBackend(Protocol):
    """Anything that turns one ChatRequest into assistant text."""
    def send(self, request: ChatRequest, timeout: float) -> str: ...
