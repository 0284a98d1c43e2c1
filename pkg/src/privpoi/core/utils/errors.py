"""
Exception hierarchy shared across privpoi.

Every domain failure derives from PrivPoiError so the CLI can map it onto exit
code 1. Plain precondition violations in numeric helpers stay ValueError.
"""
from typing import Optional


class PrivPoiError(Exception):
    """Base class for all domain errors."""


class ConfigError(PrivPoiError):
    """Invalid or inconsistent configuration."""


class DatasetError(PrivPoiError):
    """Malformed or inconsistent input data.

    Parameters
    ----------
    message
        Human readable description.
    path
        File the problem was found in, if any.
    line
        1-based line number within `path`, if any.
    """
    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class ParseError(PrivPoiError):
    """LLM output could not be parsed into the declared format.

    The raw text is kept for audit and repair prompts.
    """
    def __init__(self, message: str, raw: str = '') -> None:
        self.raw = raw
        super().__init__(message)


class LlmError(PrivPoiError):
    """Base class for chat-completion failures."""


class TransportError(LlmError):
    """Transient failure (timeout, 429, 5xx) or retries exhausted."""


class ApiError(LlmError):
    """Non-retryable API response."""
    def __init__(self, message: str, status: Optional[int] = None, body: str = '') -> None:
        self.status = status
        self.body = body
        super().__init__(f"{message} (status={status}): {body}")


class ReplayMissError(LlmError):
    """A replayed session issued a request that is not in the cassette."""


class KBError(PrivPoiError):
    """Knowledge-base storage failure."""


class ExtractionError(PrivPoiError):
    """Preference extraction failed for every aspect."""


class EvaluationError(PrivPoiError):
    """Evaluation could not be carried out as configured."""
