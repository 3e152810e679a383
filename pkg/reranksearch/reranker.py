"""
Stage-two reranking: prompt construction, chat clients and reply parsing.
"""
import abc
import enum
import hashlib
import json
import logging
import re
from dataclasses import dataclass
from typing import Optional, Tuple

from reranksearch.config import ProviderSettings
from reranksearch.embedder import tokenize
from reranksearch.errors import (
    BadResponse, DataError, DuplicateId, EmptyInput, EmptyText, IoError,
    ParseFailure, TransportError, UsageError)
from reranksearch.transport import RemoteTransport

logger = logging.getLogger(__name__)

CHAT_TIMEOUT = 60.0

SYSTEM_TEMPLATE = (
    "You are a search-result ranker. Given a user query and a list of "
    "candidate items, select the {top_n} {items} most relevant to the query "
    "and rank them, most relevant first. Respect negations, constraints, and "
    "conceptual requirements in the query. Reply with ONLY a JSON array of the "
    "selected item ids. Select fewer than {top_n} only if fewer are relevant."
)

_NEWLINES = re.compile(r"\r\n|\r|\n")
_FENCE = re.compile(r"```[\w+.-]*[ \t]*\n?(.*?)\s*```", re.DOTALL)
_TOP_N = re.compile(r"select the (\d+) items? ")


class DegradedReason(enum.Enum):
    parse_failure = "parse_failure"
    transport_failure = "transport_failure"
    empty_selection = "empty_selection"


@dataclass(frozen=True)
class RerankRequest:
    """
    A query and its stage-one shortlist.

    Attributes:
        query (str): The user query.
        candidates (tuple): (record_id, document) pairs in shortlist order.
        top_n (int): Maximum number of ids to select.
    """
    query: str
    candidates: Tuple[Tuple[str, str], ...]
    top_n: int

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(
            (record_id, document) for record_id, document in self.candidates))
        if not self.query or not self.query.strip():
            raise EmptyText("Rerank query must not be empty")
        if not self.candidates:
            raise EmptyInput("Rerank request needs at least one candidate")
        if isinstance(self.top_n, bool) or not isinstance(self.top_n, int) \
                or self.top_n < 1:
            raise UsageError(f"top_n must be a positive integer, got {self.top_n!r}")
        seen = set()
        for record_id, _ in self.candidates:
            if record_id in seen:
                raise DuplicateId(record_id)
            seen.add(record_id)

    @property
    def candidate_ids(self):
        return [record_id for record_id, _ in self.candidates]


@dataclass(frozen=True)
class RerankOutcome:
    selected: Tuple[str, ...]
    degraded: bool = False
    degraded_reason: Optional[DegradedReason] = None

    def __post_init__(self):
        object.__setattr__(self, "selected", tuple(self.selected))
        if self.degraded != (self.degraded_reason is not None):
            raise ValueError("degraded_reason is set exactly when degraded is true")


def _single_line(text):
    return _NEWLINES.sub(" ", text)


def build_prompt(request):
    """
    Renders the system and user messages for a rerank request.

    Args:
        request (RerankRequest): Query, shortlist and `top_n`.

    Returns:
        tuple: (system_text, user_text). Every candidate occupies exactly one
        line of `user_text`, formatted "{record_id}. {document}".

    ```python
    _, user = build_prompt(RerankRequest("spicy", [("r1", "title: Vindaloo")], 1))
    user
    'Query: spicy\\n\\nCandidates:\\nr1. title: Vindaloo'
    ```
    """
    items = "item" if request.top_n == 1 else "items"
    system_text = SYSTEM_TEMPLATE.format(top_n=request.top_n, items=items)
    lines = [f"{record_id}. {_single_line(document)}"
             for record_id, document in request.candidates]
    user_text = (f"Query: {_single_line(request.query)}\n\nCandidates:\n"
                 + "\n".join(lines))
    return system_text, user_text


def parse_reply(reply, valid_ids, top_n):
    """
    Extracts the selected ids from a chat reply.

    The reply is stripped, one surrounding markdown code fence is removed,
    and the rest must be a JSON array of strings. Unknown ids are dropped,
    duplicates keep their first position and the list is cut to `top_n`.

    Args:
        reply (str): Raw reply text.
        valid_ids (set): Ids the reply may select.
        top_n (int): Maximum number of ids returned.

    Returns:
        list: The surviving ids, possibly empty.

    Raises:
        ParseFailure: If the reply is not a JSON array of strings.
    """
    if not isinstance(reply, str):
        raise ParseFailure(f"Reply is {type(reply).__name__}, not text")
    text = reply.strip()
    fenced = _FENCE.fullmatch(text)
    if fenced:
        text = fenced.group(1).strip()
    try:
        parsed = json.loads(text)
    except (ValueError, RecursionError) as e:
        raise ParseFailure(f"Reply is not JSON: {text[:80]!r}") from e
    if not isinstance(parsed, list) or not all(isinstance(x, str) for x in parsed):
        raise ParseFailure(f"Reply is not a JSON array of strings: {text[:80]!r}")

    selected = []
    for record_id in parsed:
        if len(selected) == top_n:
            break
        if record_id in valid_ids and record_id not in selected:
            selected.append(record_id)
    return selected


def rerank(request, client):
    """
    Asks `client` to rank the shortlist and validates its answer.

    Never raises for client failures: a failing client or an unparseable
    reply falls back to the first `top_n` candidates in shortlist order, and
    an empty selection is returned as is. Both are flagged as degraded.

    Args:
        request (RerankRequest): The query and shortlist.
        client (ChatClient): Chat-completion client.

    Returns:
        RerankOutcome: The selection and its degradation status.
    """
    system_text, user_text = build_prompt(request)
    fallback = request.candidate_ids[:request.top_n]
    try:
        reply = client.complete(system_text, user_text)
    except Exception as e:
        logger.warning("Rerank degraded to vector order, chat client failed: %s", e)
        return RerankOutcome(fallback, True, DegradedReason.transport_failure)

    try:
        selected = parse_reply(reply, set(request.candidate_ids), request.top_n)
    except ParseFailure as e:
        logger.warning("Rerank degraded to vector order: %s", e)
        return RerankOutcome(fallback, True, DegradedReason.parse_failure)

    if not selected:
        logger.warning("Chat client selected no candidates for %r", request.query)
        return RerankOutcome((), True, DegradedReason.empty_selection)
    return RerankOutcome(selected)


class ChatClient(abc.ABC):
    """A chat-completion backend returning the assistant's reply text."""

    @abc.abstractmethod
    def complete(self, system_text, user_text):
        pass


class RemoteChatClient(ChatClient):
    """
    Client for an OpenAI-compatible `/v1/chat/completions` endpoint.

    Requests are sent with temperature 0 and a 60 second timeout, and are
    retried like embedding requests.
    """

    def __init__(self, settings=None, transport=None, model=None):
        settings = settings or ProviderSettings.from_env()
        if transport is None:
            transport = RemoteTransport(
                settings.chat_url, settings.require_api_key(), CHAT_TIMEOUT)
        self.transport = transport
        self.model = model or settings.chat_model

    def complete(self, system_text, user_text):
        payload = self.transport.post_json("/v1/chat/completions", {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        })
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise BadResponse("Chat reply has no choices[0].message.content") from e
        if not isinstance(content, str):
            raise BadResponse("Chat reply content is not text")
        return content


def prompt_hash(system_text, user_text):
    """SHA-256 hex digest identifying a prompt in scripted reply fixtures."""
    digest = hashlib.sha256()
    digest.update(system_text.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(user_text.encode("utf-8"))
    return digest.hexdigest()


def _split_prompt(user_text):
    """Recovers (query, [(record_id, document)]) from a rendered user message."""
    head, _, body = user_text.partition("\n\nCandidates:\n")
    query = head[len("Query: "):] if head.startswith("Query: ") else head
    candidates = []
    for line in body.split("\n"):
        record_id, sep, document = line.partition(". ")
        if sep:
            candidates.append((record_id, document))
    return query, candidates


class ScriptedChatClient(ChatClient):
    """
    Deterministic client answering from a fixed table.

    Args:
        replies (dict): Maps a query string or a `prompt_hash` to reply text.
        fallback (ChatClient): Answers prompts missing from `replies`. When
            None, such prompts raise `TransportError`.
    """

    def __init__(self, replies=None, fallback=None):
        self.replies = dict(replies or {})
        self.fallback = fallback

    def complete(self, system_text, user_text):
        key = prompt_hash(system_text, user_text)
        if key in self.replies:
            return self.replies[key]
        query, _ = _split_prompt(user_text)
        if query in self.replies:
            return self.replies[query]
        if self.fallback is not None:
            return self.fallback.complete(system_text, user_text)
        raise TransportError(f"No scripted reply for query {query!r}")


class FailingChatClient(ChatClient):
    """Always fails, as an unreachable endpoint would."""

    def complete(self, system_text, user_text):
        raise TransportError("Chat endpoint unavailable")


@dataclass(frozen=True)
class ChatLexicon:
    """
    Word lists used by `KeywordChatClient`.

    Attributes:
        stopwords (frozenset): Query words carrying no constraint.
        synonyms (dict): Negated word -> words whose presence also excludes.
        concepts (dict): Query word -> words that satisfy it.
    """
    stopwords: frozenset = frozenset()
    synonyms: tuple = ()
    concepts: tuple = ()

    @classmethod
    def from_dict(cls, data):
        def table(name):
            value = data.get(name, {})
            if not isinstance(value, dict):
                raise DataError(f"Lexicon field {name!r} must be an object")
            return tuple(sorted((word.lower(), frozenset(w.lower() for w in words))
                                for word, words in value.items()))
        stopwords = data.get("stopwords", [])
        if not isinstance(stopwords, list):
            raise DataError("Lexicon field 'stopwords' must be an array")
        return cls(frozenset(w.lower() for w in stopwords),
                   table("synonyms"), table("concepts"))

    def expand(self, word, table):
        for key, words in getattr(self, table):
            if key == word:
                return {word} | words
        return {word}


class KeywordChatClient(ChatClient):
    """
    Negation-aware keyword ranker standing in for a chat model.

    Query words following "no", "not", "without", "non" or "free of" are
    negated until a clause break ("but", "with", "that", "which", "who").
    Candidates mentioning a negated word or one of its synonyms are dropped.
    Survivors mentioning a remaining query word or one of its concepts come
    first, then the other survivors; both groups keep shortlist order.
    """
    NEGATION_CUES = frozenset({"no", "not", "without", "non"})
    CLAUSE_BREAKS = frozenset({"but", "with", "that", "which", "who"})
    CONJUNCTIONS = frozenset({"or", "and", "nor"})

    def __init__(self, lexicon=None):
        self.lexicon = lexicon or ChatLexicon()

    def query_terms(self, query):
        """Splits a query into (positive words, negated words)."""
        tokens = tokenize(query)
        positive, negated = [], []
        negating = False
        for i, token in enumerate(tokens):
            if token in self.NEGATION_CUES or (
                    token == "free" and tokens[i + 1:i + 2] == ["of"]):
                negating = True
                continue
            if token in self.CLAUSE_BREAKS:
                negating = False
                continue
            if token in self.CONJUNCTIONS or token in self.lexicon.stopwords:
                continue
            (negated if negating else positive).append(token)
        return positive, negated

    def select(self, query, candidates, top_n):
        positive, negated = self.query_terms(query)
        excluded = set()
        for word in negated:
            excluded |= self.lexicon.expand(word, "synonyms")
        wanted = set()
        for word in positive:
            wanted |= self.lexicon.expand(word, "concepts")

        survivors = []
        for record_id, document in candidates:
            words = set(tokenize(document))
            if not words & excluded:
                survivors.append((record_id, bool(words & wanted)))
        matching = [record_id for record_id, hit in survivors if hit]
        rest = [record_id for record_id, hit in survivors if not hit]
        return (matching + rest)[:top_n]

    def complete(self, system_text, user_text):
        match = _TOP_N.search(system_text)
        top_n = int(match.group(1)) if match else 3
        query, candidates = _split_prompt(user_text)
        return json.dumps(self.select(query, candidates, top_n))


def load_chat_client(spec, settings=None):
    """
    Builds a chat client from a `--provider` value.

    Args:
        spec (str): "remote" or "scripted:<fixture.json>". The fixture may
            hold "replies" (query or prompt hash -> reply text), "fail": true,
            and lexicon fields ("stopwords", "synonyms", "concepts") that turn
            on a `KeywordChatClient` for prompts without a scripted reply.
        settings (ProviderSettings): Used by the remote client.

    Returns:
        ChatClient: The configured client.

    Raises:
        UsageError: Unknown provider.
        IoError: The fixture cannot be read.
        DataError: The fixture is not valid JSON of the expected shape.
        MissingApiKey: Remote provider without an API key.
    """
    if spec == "remote":
        return RemoteChatClient(settings)
    if not spec.startswith("scripted:"):
        raise UsageError(f"Unknown chat provider {spec!r}; "
                         "expected 'remote' or 'scripted:<fixture.json>'")

    path = spec[len("scripted:"):]
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = json.load(file)
    except OSError as e:
        raise IoError(f"Cannot read chat fixture {path}: {e}") from e
    except ValueError as e:
        raise DataError(f"Chat fixture {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise DataError(f"Chat fixture {path} must hold a JSON object")

    if data.get("fail"):
        return FailingChatClient()
    fallback = None
    if any(key in data for key in ("stopwords", "synonyms", "concepts")):
        fallback = KeywordChatClient(ChatLexicon.from_dict(data))
    replies = data.get("replies", {})
    if not isinstance(replies, dict):
        raise DataError(f"Chat fixture {path}: 'replies' must be an object")
    if not replies and fallback is not None:
        return fallback
    return ScriptedChatClient(replies, fallback)
