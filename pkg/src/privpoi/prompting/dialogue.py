import logging
from collections.abc import Callable
from typing import Any, Optional, TypeVar

from privpoi.core.utils.errors import ParseError
from privpoi.llm.client import LlmClient
from privpoi.llm.types import ChatMessage, ChatRequest

log = logging.getLogger('privpoi')

__all__ = [
    'REPAIR_PREFIX',
    'Dialogue',
]

REPAIR_PREFIX = 'Answer strictly in the format: '

T = TypeVar('T')


class Dialogue:
    """A conversation with the LLM.

    The client is stateless, so every turn resends the whole message history.
    The general task instruction is the system message.

    Parameters
    ----------
    client
        Shared LLM client.
    system
        System preamble, normally the rendered task instruction.
    config
        Optional overrides: model, temperature, max_tokens, repair_retries.
    """
    def __init__(
        self,
        client: LlmClient,
        system: Optional[str] = None,
        config: Optional[dict[str, Any]] = None,
    ) -> None:
        self.client = client
        self.config = dict(config) if config else {}
        self.model = 'gpt-3.5-turbo'
        self.temperature = 0.0
        self.max_tokens = 512
        self.repair_retries = 1

        if config is not None:
            # Overwrite defaults with config values.
            self.model = config.get('model', self.model)
            self.temperature = float(config.get('temperature', self.temperature))
            self.max_tokens = int(config.get('max_tokens', self.max_tokens))
            self.repair_retries = int(config.get('repair_retries', self.repair_retries))

        self.messages: list[ChatMessage] = []
        if system:
            self.messages.append(ChatMessage('system', system))
        self.repairs = 0

    def fork(self) -> 'Dialogue':
        """New dialogue sharing only the system preamble."""
        system = self.messages[0].content if self.messages and self.messages[0].role == 'system' else None
        return Dialogue(self.client, system=system, config=self.config)

    def send(self, content: str, tag: str) -> str:
        """Append a user turn, get the reply and append it too."""
        self.messages.append(ChatMessage('user', content))
        request = ChatRequest(
            messages=tuple(self.messages),
            model=self.model,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            tag=tag,
        )
        try:
            reply = self.client.complete(request)
        except Exception:
            self.messages.pop()
            raise
        self.messages.append(ChatMessage('assistant', reply))
        return reply

    def ask(
        self,
        content: str,
        tag: str,
        parser: Callable[[str], T],
        format_hint: str,
    ) -> T:
        """Send a prompt and parse the reply, repairing on ParseError.

        Each repair turn asks for the declared format and is tagged
        '<tag>:repair'. The last ParseError propagates.
        """
        reply = self.send(content, tag)
        for attempt in range(self.repair_retries + 1):
            try:
                return parser(reply)
            except ParseError as e:
                if attempt == self.repair_retries:
                    log.warning(f"Unparseable reply to {tag} after {attempt} repair(s): {e}")
                    raise
                self.repairs += 1
                log.info(f"Reply to {tag} did not parse; asking for {format_hint}")
                reply = self.send(REPAIR_PREFIX + format_hint, f"{tag}:repair")
        raise AssertionError('unreachable')
