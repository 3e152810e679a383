"""
Provider configuration read from the environment.
"""
import os
from dataclasses import dataclass
from typing import Optional

from reranksearch.errors import MissingApiKey

API_KEY_ENV = "RERANK_SEARCH_API_KEY"
EMBED_URL_ENV = "RERANK_SEARCH_EMBED_URL"
CHAT_URL_ENV = "RERANK_SEARCH_CHAT_URL"
EMBED_MODEL_ENV = "RERANK_SEARCH_EMBED_MODEL"
CHAT_MODEL_ENV = "RERANK_SEARCH_CHAT_MODEL"
CHAT_PROVIDER_ENV = "RERANK_SEARCH_CHAT_PROVIDER"

DEFAULT_BASE_URL = "https://api.openai.com"
DEFAULT_EMBED_MODEL = "text-embedding-ada-002"
DEFAULT_CHAT_MODEL = "gpt-4o"
DEFAULT_CHAT_PROVIDER = "remote"


@dataclass(frozen=True)
class ProviderSettings:
    """
    Endpoints, models and credentials for the remote providers.

    Attributes:
        embed_url (str): Base URL of the embeddings endpoint (without `/v1`).
        chat_url (str): Base URL of the chat-completions endpoint.
        api_key (str or None): Bearer token, None when unset.
        embed_model (str): Embedding model name.
        chat_model (str): Chat model name.
        chat_provider (str): Default chat client spec, `remote` or
            `scripted:<fixture.json>`.
    """
    embed_url: str = DEFAULT_BASE_URL
    chat_url: str = DEFAULT_BASE_URL
    api_key: Optional[str] = None
    embed_model: str = DEFAULT_EMBED_MODEL
    chat_model: str = DEFAULT_CHAT_MODEL
    chat_provider: str = DEFAULT_CHAT_PROVIDER

    @classmethod
    def from_env(cls, environ=None):
        env = os.environ if environ is None else environ

        def get(name, default):
            value = env.get(name, "").strip()
            return value or default

        return cls(
            embed_url=get(EMBED_URL_ENV, DEFAULT_BASE_URL),
            chat_url=get(CHAT_URL_ENV, DEFAULT_BASE_URL),
            api_key=get(API_KEY_ENV, None),
            embed_model=get(EMBED_MODEL_ENV, DEFAULT_EMBED_MODEL),
            chat_model=get(CHAT_MODEL_ENV, DEFAULT_CHAT_MODEL),
            chat_provider=get(CHAT_PROVIDER_ENV, DEFAULT_CHAT_PROVIDER),
        )

    def require_api_key(self):
        """
        Returns the API key or raises `MissingApiKey` naming the variable.
        """
        if not self.api_key:
            raise MissingApiKey(API_KEY_ENV)
        return self.api_key
