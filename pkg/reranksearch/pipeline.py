"""
End-to-end search: embed the query, shortlist by vector similarity, and
optionally rerank the shortlist with a chat model.
"""
import enum
import logging
import time
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

from reranksearch.errors import EmptyText, InvalidK, ModelMismatch, UsageError
from reranksearch.index import search
from reranksearch.reranker import RerankRequest, rerank
from reranksearch.utils import elapsed_ms

logger = logging.getLogger(__name__)

DEFAULT_SHORTLIST_K = 15
DEFAULT_TOP_N = 3


class Mode(enum.Enum):
    raw = "raw"
    assisted = "assisted"


@dataclass(frozen=True)
class PipelineConfig:
    """
    Attributes:
        shortlist_k (int): Stage-one candidates handed to the reranker.
        top_n (int): Final result count.
        mode (Mode): raw or assisted.
        pad_to_n (bool): Pad short reranked selections from shortlist order.
    """
    shortlist_k: int = DEFAULT_SHORTLIST_K
    top_n: int = DEFAULT_TOP_N
    mode: Mode = Mode.raw
    pad_to_n: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("shortlist_k", "top_n"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise InvalidK(f"{name} must be a positive integer, got {value!r}")
        if self.top_n > self.shortlist_k:
            raise UsageError(f"top_n ({self.top_n}) cannot exceed "
                             f"shortlist_k ({self.shortlist_k})")


@dataclass(frozen=True)
class ResultRow:
    rank: int
    record_id: str
    document: str
    stage1_score: Optional[float]
    stage1_rank: Optional[int] = None


@dataclass(frozen=True)
class Timings:
    embed_ms: float
    search_ms: float
    rerank_ms: Optional[float] = None


@dataclass(frozen=True)
class SearchResult:
    query: str
    results: Tuple[ResultRow, ...]
    mode: Mode
    degraded: bool
    timings: Timings
    degraded_reason: Optional[str] = None

    @property
    def ids(self):
        return [row.record_id for row in self.results]

    def to_dict(self):
        """JSON-ready form of the result."""
        return {
            "query": self.query,
            "mode": self.mode.value,
            "degraded": self.degraded,
            "degraded_reason": self.degraded_reason,
            "results": [asdict(row) for row in self.results],
            "timings": asdict(self.timings),
        }


def _embed_query(query, index, provider):
    if not isinstance(query, str) or not query.strip():
        raise EmptyText("Query must not be empty")
    if provider.model_id != index.model_id:
        raise ModelMismatch(provider.model_id, index.model_id)
    return provider.embed_one(query)


def _document(documents, record_id):
    return documents.get(record_id, "") if documents is not None else ""


def raw_search(query, index, provider, config=None, documents=None,
               clock=time.perf_counter):
    """
    Stage one only: the `top_n` nearest records to the query.

    Args:
        query (str): Query text.
        index (FlatIndex): Index built with `provider`'s model.
        provider (EmbeddingProvider): Embeds the query.
        config (PipelineConfig): `top_n` is used.
        documents (dict): Record id -> document text for the result rows.
        clock (callable): Monotonic seconds, `time.perf_counter` by default.

    Returns:
        SearchResult: Mode raw, never degraded, no rerank timing.

    Raises:
        EmptyText: If the query is blank or has no tokens.
        ModelMismatch: If provider and index models differ.
    """
    config = config or PipelineConfig()
    t0 = clock()
    qvec = _embed_query(query, index, provider)
    t1 = clock()
    matches = search(index, qvec, config.top_n)
    t2 = clock()

    rows = tuple(ResultRow(m.rank, m.record_id, _document(documents, m.record_id),
                           m.score, m.rank) for m in matches)
    return SearchResult(query, rows, Mode.raw, False,
                        Timings(elapsed_ms(t0, t1), elapsed_ms(t1, t2)))


def assisted_search(query, index, provider, chat_client, config=None,
                    documents=None, clock=time.perf_counter):
    """
    Both stages: shortlist `shortlist_k` records, then let `chat_client`
    pick and order up to `top_n` of them.

    Chat failures never raise; the result is flagged degraded and holds the
    shortlist's first `top_n` records instead. An empty selection is returned
    empty unless `config.pad_to_n` is set.

    Returns:
        SearchResult: Mode assisted with embed, search and rerank timings.
    """
    config = config or PipelineConfig(mode=Mode.assisted)
    t0 = clock()
    qvec = _embed_query(query, index, provider)
    t1 = clock()
    shortlist = search(index, qvec, config.shortlist_k)
    t2 = clock()
    request = RerankRequest(
        query, [(m.record_id, _document(documents, m.record_id)) for m in shortlist],
        config.top_n)
    outcome = rerank(request, chat_client)
    t3 = clock()

    selected = list(outcome.selected)
    if config.pad_to_n and len(selected) < config.top_n:
        chosen = set(selected)
        selected += [m.record_id for m in shortlist
                     if m.record_id not in chosen][:config.top_n - len(selected)]

    by_id = {m.record_id: m for m in shortlist}
    rows = tuple(
        ResultRow(rank, record_id, _document(documents, record_id),
                  by_id[record_id].score, by_id[record_id].rank)
        for rank, record_id in enumerate(selected, start=1))
    reason = outcome.degraded_reason.value if outcome.degraded else None
    logger.debug("Assisted search %r: %s", query, [row.record_id for row in rows])
    return SearchResult(query, rows, Mode.assisted, outcome.degraded,
                        Timings(elapsed_ms(t0, t1), elapsed_ms(t1, t2),
                                elapsed_ms(t2, t3)),
                        reason)


def run_search(query, index, provider, chat_client=None, config=None,
               documents=None, clock=time.perf_counter):
    """Dispatches to `raw_search` or `assisted_search` by `config.mode`."""
    config = config or PipelineConfig()
    if config.mode is Mode.raw:
        return raw_search(query, index, provider, config, documents, clock)
    if chat_client is None:
        raise UsageError("Assisted search needs a chat client")
    return assisted_search(query, index, provider, chat_client, config,
                           documents, clock)
