"""
Text embedding providers.

`LocalEmbedder` is a deterministic signed feature-hashing embedder that works
offline. `RemoteEmbedder` calls any OpenAI-compatible `/v1/embeddings`
endpoint.
"""
import abc
import logging
import re
import threading
from multiprocessing.pool import ThreadPool

import numpy as np

from reranksearch.config import ProviderSettings
from reranksearch.errors import (
    BadResponse, DimMismatch, EmptyInput, EmptyText, UsageError)
from reranksearch.transport import MAX_IN_FLIGHT, RemoteTransport
from reranksearch.utils import chunked

logger = logging.getLogger(__name__)

DEFAULT_DIM = 256
MAX_BATCH = 64
EMBED_TIMEOUT = 30.0

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK_64 = (1 << 64) - 1

_TOKEN_RE = re.compile(r"[^\W_]+")
_LOCAL_MODEL_RE = re.compile(r"local-fnv(\d+)")

LOCAL_PROVIDER_ID = "local"
REMOTE_PROVIDER_ID = "remote"


class EmbeddingVector:
    """
    A fixed-dimension float32 vector and where it came from.

    Args:
        values (array-like): The vector components.
        dim (int): Expected length of `values`.
        provider_id (str): "local" or "remote".
        model_id (str): Model that produced the vector.

    Raises:
        DimMismatch: If `len(values) != dim`.
        ValueError: If a component is NaN or infinite.
    """
    __slots__ = ("values", "dim", "provider_id", "model_id")

    def __init__(self, values, dim, provider_id, model_id):
        values = np.array(values, dtype=np.float32)
        if values.ndim != 1 or values.shape[0] != dim or dim < 1:
            raise DimMismatch(
                f"Vector of shape {values.shape} does not have dim {dim}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Embedding vectors must be finite")
        values.setflags(write=False)
        self.values = values
        self.dim = int(dim)
        self.provider_id = provider_id
        self.model_id = model_id

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (self.dim == other.dim and self.model_id == other.model_id
                and self.provider_id == other.provider_id
                and self.values.tobytes() == other.values.tobytes())

    def __hash__(self):
        return hash((self.model_id, self.values.tobytes()))

    def __len__(self):
        return self.dim

    def __repr__(self):
        return (f"EmbeddingVector(dim={self.dim}, provider_id={self.provider_id!r}, "
                f"model_id={self.model_id!r})")

    def tolist(self):
        return self.values.tolist()


def fnv1a_64(data):
    """
    FNV-1a 64-bit hash of a byte string.

    ```python
    fnv1a_64(b"a")
    12638187200555641996
    ```
    """
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK_64
    return h


def tokenize(text):
    """
    Lowercases `text` and splits it on every non-alphanumeric character.
    """
    return _TOKEN_RE.findall(text.lower())


def features(text):
    """
    Token unigrams followed by adjacent-token bigrams joined with a space.

    ```python
    features("Fish and chips")
    ['fish', 'and', 'chips', 'fish and', 'and chips']
    ```
    """
    tokens = tokenize(text)
    return tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


def local_model_id(dim):
    return f"local-fnv{dim}"


def local_embed(text, dim=DEFAULT_DIM):
    """
    Deterministic signed feature-hashing embedding.

    Every feature is hashed with FNV-1a 64 over its UTF-8 bytes. The bucket is
    `h mod dim`, the sign is +1 when bit 63 of `h` is clear and -1 otherwise.
    The bucket sums are L2-normalized in float32, accumulating squares in
    bucket order.

    Args:
        text (str): Text to embed.
        dim (int): Number of buckets.

    Returns:
        EmbeddingVector: A unit-length vector with provider "local".

    Raises:
        EmptyText: If no alphanumeric token survives normalization, or the
            feature signs cancel to the zero vector.
    """
    if dim < 1:
        raise UsageError(f"dim must be positive, got {dim}")
    feats = features(text)
    if not feats:
        raise EmptyText(f"No alphanumeric tokens in {text!r}")

    counts = np.zeros(dim, dtype=np.float32)
    for feature in feats:
        h = fnv1a_64(feature.encode("utf-8"))
        counts[h % dim] += np.float32(-1.0 if h >> 63 else 1.0)

    # cumsum accumulates sequentially, unlike np.sum's pairwise reduction
    norm = np.sqrt(np.cumsum(counts * counts, dtype=np.float32)[-1])
    if norm == 0:
        raise EmptyText(f"Features of {text!r} cancel to the zero vector")
    return EmbeddingVector(counts / norm, dim, LOCAL_PROVIDER_ID,
                           local_model_id(dim))


class EmbeddingProvider(abc.ABC):
    """
    Turns text into `EmbeddingVector`s. All vectors of one instance share `dim`.
    """
    provider_id = None

    @property
    @abc.abstractmethod
    def dim(self):
        """Vector dimension, or None when not yet known."""

    @property
    @abc.abstractmethod
    def model_id(self):
        """Identifier stored in indexes built with this provider."""

    @abc.abstractmethod
    def embed_batch(self, texts):
        """Embeds every text, preserving order."""

    def embed_one(self, text):
        return self.embed_batch([text])[0]


class LocalEmbedder(EmbeddingProvider):
    """Offline provider backed by `local_embed`."""
    provider_id = LOCAL_PROVIDER_ID

    def __init__(self, dim=DEFAULT_DIM):
        if dim < 1:
            raise UsageError(f"dim must be positive, got {dim}")
        self._dim = int(dim)

    @property
    def dim(self):
        return self._dim

    @property
    def model_id(self):
        return local_model_id(self._dim)

    def embed_one(self, text):
        return local_embed(text, self._dim)

    def embed_batch(self, texts):
        return [local_embed(text, self._dim) for text in texts]


def remote_embed_batch(texts, endpoint=None, model=None, api_key=None,
                       transport=None):
    """
    Embeds up to `MAX_BATCH` texts with one `/v1/embeddings` request.

    Args:
        texts (list): Non-empty texts.
        endpoint (str): Endpoint root URL. Ignored when `transport` is given.
        model (str): Embedding model name.
        api_key (str): Bearer token. Ignored when `transport` is given.
        transport (RemoteTransport): Transport to send the request with.

    Returns:
        list: One `EmbeddingVector` per text, in input order.

    Raises:
        AuthFailed, RateLimited, TransportError: See `RemoteTransport.post_json`.
        BadResponse: Missing or odd-shaped payload, or inconsistent dims.
    """
    texts = list(texts)
    if not texts:
        raise EmptyInput("remote_embed_batch needs at least one text")
    if len(texts) > MAX_BATCH:
        raise UsageError(
            f"Batch of {len(texts)} texts exceeds the cap of {MAX_BATCH}")
    for text in texts:
        if not isinstance(text, str) or not text.strip():
            raise EmptyText("Cannot embed empty text")
    if transport is None:
        transport = RemoteTransport(endpoint, api_key, EMBED_TIMEOUT)

    payload = transport.post_json(
        "/v1/embeddings", {"model": model, "input": texts})
    return _parse_embeddings(payload, len(texts), model)


def _parse_embeddings(payload, expected, model):
    data = payload.get("data") if isinstance(payload, dict) else None
    if not isinstance(data, list) or len(data) != expected:
        raise BadResponse(
            f"Expected {expected} embeddings in 'data', got {_describe(data)}")

    by_index = {}
    for item in data:
        if not isinstance(item, dict):
            raise BadResponse("Embedding item is not an object")
        index = item.get("index")
        embedding = item.get("embedding")
        if (not isinstance(index, int) or isinstance(index, bool)
                or not 0 <= index < expected or index in by_index):
            raise BadResponse(f"Invalid or repeated embedding index {index!r}")
        if (not isinstance(embedding, list) or not embedding
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                           for x in embedding)):
            raise BadResponse(f"Embedding {index} is not a list of numbers")
        by_index[index] = embedding

    dims = {len(embedding) for embedding in by_index.values()}
    if len(dims) != 1:
        raise BadResponse(f"Inconsistent embedding dims in batch: {sorted(dims)}")
    dim = dims.pop()

    vectors = []
    for i in range(expected):
        try:
            vectors.append(EmbeddingVector(
                by_index[i], dim, REMOTE_PROVIDER_ID, model))
        except ValueError as e:
            raise BadResponse(f"Embedding {i}: {e}") from e
    return vectors


def _describe(value):
    if isinstance(value, list):
        return f"{len(value)} items"
    return type(value).__name__


class RemoteEmbedder(EmbeddingProvider):
    """
    Provider for an OpenAI-compatible embeddings endpoint.

    Args:
        settings (ProviderSettings): Endpoint, model and key. Read from the
            environment when omitted.
        transport (RemoteTransport): Optional transport, e.g. pointing at a stub.
        model (str): Overrides `settings.embed_model`.
        batch_size (int): Texts per request, at most `MAX_BATCH`.
    """
    provider_id = REMOTE_PROVIDER_ID

    def __init__(self, settings=None, transport=None, model=None,
                 batch_size=MAX_BATCH):
        settings = settings or ProviderSettings.from_env()
        if not 1 <= batch_size <= MAX_BATCH:
            raise UsageError(f"batch_size must be between 1 and {MAX_BATCH}")
        if transport is None:
            transport = RemoteTransport(
                settings.embed_url, settings.require_api_key(), EMBED_TIMEOUT)
        self.transport = transport
        self.batch_size = batch_size
        self._model = model or settings.embed_model
        self._dim = None
        self._lock = threading.Lock()

    @property
    def dim(self):
        return self._dim

    @property
    def model_id(self):
        return self._model

    def embed_batch(self, texts):
        batches = chunked(texts, self.batch_size)
        if not batches:
            return []
        if len(batches) == 1:
            results = [self._embed_chunk(batches[0])]
        else:
            with ThreadPool(min(MAX_IN_FLIGHT, len(batches))) as p:
                results = p.map(self._embed_chunk, batches)
        vectors = [vector for result in results for vector in result]
        logger.debug("Embedded %d texts in %d requests", len(vectors), len(batches))
        return vectors

    def _embed_chunk(self, texts):
        vectors = remote_embed_batch(texts, model=self._model,
                                     transport=self.transport)
        with self._lock:
            if self._dim is None:
                self._dim = vectors[0].dim
            elif vectors[0].dim != self._dim:
                raise BadResponse(
                    f"Provider switched dim from {self._dim} to {vectors[0].dim}")
        return vectors


def provider_id_for_model(model_id):
    """
    Returns "local" for "local-fnv<dim>" model ids and "remote" otherwise.
    """
    if _LOCAL_MODEL_RE.fullmatch(model_id):
        return LOCAL_PROVIDER_ID
    return REMOTE_PROVIDER_ID


def provider_for_model(model_id, settings=None, transport=None):
    """
    Rebuilds the provider an index was built with.

    Args:
        model_id (str): Model id stored in the index, e.g. "local-fnv256".
        settings (ProviderSettings): Used for remote models.
        transport (RemoteTransport): Optional transport for remote models.

    Returns:
        EmbeddingProvider: `LocalEmbedder` for "local-fnv<dim>" ids, otherwise
        a `RemoteEmbedder` for that model.
    """
    match = _LOCAL_MODEL_RE.fullmatch(model_id)
    if match:
        return LocalEmbedder(int(match.group(1)))
    return RemoteEmbedder(settings=settings, transport=transport, model=model_id)
