from .backends import API_KEY_ENV, OpenAIBackend, ScriptedBackend, tag_prefixes
from .cassette import (CassetteRecorder, ReplayBackend, load_cassette,
                       record_cassette)
from .client import LlmClient, complete
from .types import ROLES, ChatBackend, ChatMessage, ChatRequest, ClientPolicy

__all__ = [
    'API_KEY_ENV',
    'OpenAIBackend',
    'ScriptedBackend',
    'tag_prefixes',
    'CassetteRecorder',
    'ReplayBackend',
    'load_cassette',
    'record_cassette',
    'LlmClient',
    'complete',
    'ROLES',
    'ChatBackend',
    'ChatMessage',
    'ChatRequest',
    'ClientPolicy',
]
