"""
Exact flat vector index with top-K search and a checksummed binary format.

File layout, little-endian::

    b"VSIX" | u8 version | u8 metric | u32 dim | u64 count
    | u16 len + model_id | count x (u16 len + id, dim x f32) | u32 crc32
"""
import enum
import logging
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from reranksearch.embedder import EmbeddingVector, provider_id_for_model
from reranksearch.errors import (
    BadMagic, CorruptPayload, DataError, DimMismatch, DuplicateId, EmptyInput,
    IoError, InvalidK, ModelMismatch, VersionUnsupported, ZeroNorm)
from reranksearch.utils import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"VSIX"
VERSION = 1

_HEAD = struct.Struct("<4sBBIQ")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_MAX_U16 = 0xFFFF


class Metric(enum.Enum):
    cosine = 0
    dot = 1
    l2 = 2

    @classmethod
    def parse(cls, value):
        """Accepts a `Metric`, its name or its on-disk code."""
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[value]
        except KeyError:
            raise ValueError(f"Unknown metric {value!r}; expected cosine, dot or l2")


@dataclass(frozen=True)
class ScoredMatch:
    record_id: str
    score: float
    rank: int


class FlatIndex:
    """
    Immutable exact-scan vector store.

    Use `build_index` or `load_index` rather than constructing this directly.

    Attributes:
        ids (tuple): Record ids in insertion order.
        vectors (numpy.ndarray): Read-only `(n, dim)` float32 matrix.
        metric (Metric): Similarity used by `search`.
        model_id (str): Embedding model of every stored vector.
    """

    def __init__(self, ids, vectors, metric, model_id):
        vectors = np.array(vectors, dtype=np.float32, copy=True)
        vectors.setflags(write=False)
        self.ids = tuple(ids)
        self.vectors = vectors
        self.metric = Metric.parse(metric)
        self.model_id = model_id
        self._vectors64 = vectors.astype(np.float64)
        self._norms = np.sqrt(np.einsum("ij,ij->i", self._vectors64, self._vectors64))
        if self.metric is Metric.cosine and np.any(self._norms == 0):
            bad = self.ids[int(np.argmax(self._norms == 0))]
            raise ZeroNorm(f"Record {bad!r} has a zero vector; cosine is undefined")

    @property
    def dim(self):
        return int(self.vectors.shape[1])

    def __len__(self):
        return len(self.ids)

    @property
    def entries(self):
        """(record_id, EmbeddingVector) pairs in insertion order."""
        provider_id = provider_id_for_model(self.model_id)
        return [(record_id, EmbeddingVector(row, self.dim, provider_id, self.model_id))
                for record_id, row in zip(self.ids, self.vectors)]

    def __eq__(self, other):
        if not isinstance(other, FlatIndex):
            return NotImplemented
        return (self.ids == other.ids and self.metric is other.metric
                and self.model_id == other.model_id
                and self.vectors.shape == other.vectors.shape
                and self.vectors.tobytes() == other.vectors.tobytes())

    def __repr__(self):
        return (f"FlatIndex(n={len(self)}, dim={self.dim}, "
                f"metric={self.metric.name}, model_id={self.model_id!r})")


def build_index(pairs, metric=Metric.cosine):
    """
    Builds a flat index from (record_id, EmbeddingVector) pairs.

    Args:
        pairs (list): Pairs in the order they should be stored.
        metric (Metric or str): "cosine", "dot" or "l2".

    Returns:
        FlatIndex: An index holding exactly the input vectors.

    Raises:
        EmptyInput: If `pairs` is empty.
        DimMismatch: If the vectors do not share one dimension.
        DuplicateId: If two pairs share an id.
        ModelMismatch: If the vectors come from different models.
        ZeroNorm: If a vector is zero and the metric is cosine.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("Cannot build an index from zero vectors")
    metric = Metric.parse(metric)

    first = pairs[0][1]
    seen = set()
    for record_id, vector in pairs:
        if not isinstance(record_id, str) or not record_id:
            raise EmptyInput("Record ids must be non-empty strings")
        if len(record_id.encode("utf-8")) > _MAX_U16:
            raise DataError(f"Record id {record_id[:32]!r}... is too long")
        if record_id in seen:
            raise DuplicateId(record_id)
        seen.add(record_id)
        if vector.dim != first.dim:
            raise DimMismatch(
                f"Record {record_id!r} has dim {vector.dim}, expected {first.dim}")
        if vector.model_id != first.model_id:
            raise ModelMismatch(vector.model_id, first.model_id)

    index = FlatIndex([record_id for record_id, _ in pairs],
                      np.stack([vector.values for _, vector in pairs]),
                      metric, first.model_id)
    logger.info("Built %r", index)
    return index


def _as_float64(vector):
    if isinstance(vector, EmbeddingVector):
        vector = vector.values
    return np.asarray(vector, dtype=np.float64)


def similarity(a, b, metric=Metric.cosine):
    """
    Scores two vectors; higher is always more similar.

    Sums are accumulated in float64 and the result is rounded to float32.

    ```python
    similarity([1, 1], [1, 0], "cosine")
    0.70710677
    similarity([1, 2], [4, 6], "l2")
    -5.0
    ```

    Raises:
        DimMismatch: If the vectors differ in length.
        ZeroNorm: If either vector is zero under cosine.
    """
    metric = Metric.parse(metric)
    a = _as_float64(a)
    b = _as_float64(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimMismatch(f"Cannot compare vectors of shapes {a.shape} and {b.shape}")
    if metric is Metric.l2:
        diff = a - b
        return np.float32(-np.sqrt(np.dot(diff, diff)))
    dot = np.dot(a, b)
    if metric is Metric.dot:
        return np.float32(dot)
    norms = np.sqrt(np.dot(a, a)) * np.sqrt(np.dot(b, b))
    if norms == 0:
        raise ZeroNorm("Cosine similarity of a zero vector is undefined")
    return np.float32(dot / norms)


def score_all(index, query):
    """
    Similarity of `query` to every stored vector, in insertion order.

    Returns:
        numpy.ndarray: float32 scores of shape `(n,)`.
    """
    q = _as_float64(query)
    if q.shape != (index.dim,):
        raise DimMismatch(f"Query has dim {q.shape[0] if q.ndim == 1 else q.shape}, "
                          f"index has dim {index.dim}")
    if index.metric is Metric.l2:
        diff = index._vectors64 - q
        return (-np.sqrt(np.einsum("ij,ij->i", diff, diff))).astype(np.float32)
    dots = index._vectors64 @ q
    if index.metric is Metric.dot:
        return dots.astype(np.float32)
    q_norm = np.sqrt(np.dot(q, q))
    if q_norm == 0:
        raise ZeroNorm("Cosine similarity of a zero query vector is undefined")
    return (dots / (index._norms * q_norm)).astype(np.float32)


def search(index, query, k):
    """
    Exact top-K search.

    Args:
        index (FlatIndex): The index to scan.
        query (EmbeddingVector or array-like): Query vector of the index dim.
        k (int): Number of matches wanted; clamped to the index size.

    Returns:
        list: `ScoredMatch` objects sorted by score descending, then
        record id ascending, ranked from 1.

    Raises:
        InvalidK: If `k < 1`.
        DimMismatch: If the query dim differs from the index dim.
    """
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidK(f"k must be a positive integer, got {k!r}")
    scores = score_all(index, query)
    n = len(scores)
    k = min(int(k), n)

    if k < n:
        # every entry tied with the k-th best score stays a candidate
        threshold = np.partition(scores, n - k)[n - k]
        candidates = np.flatnonzero(scores >= threshold)
    else:
        candidates = range(n)
    ids = index.ids
    order = sorted(candidates, key=lambda i: (-scores[i], ids[i]))[:k]
    return [ScoredMatch(ids[i], float(scores[i]), rank)
            for rank, i in enumerate(order, start=1)]


def _serialize(index):
    model = index.model_id.encode("utf-8")
    if len(model) > _MAX_U16:
        raise DataError("Model id is too long to store")
    parts = [_HEAD.pack(MAGIC, VERSION, index.metric.value, index.dim, len(index)),
             _U16.pack(len(model)), model]
    rows = index.vectors.astype("<f4")
    for record_id, row in zip(index.ids, rows):
        encoded = record_id.encode("utf-8")
        parts.append(_U16.pack(len(encoded)))
        parts.append(encoded)
        parts.append(row.tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def save_index(index, path):
    """
    Writes `index` to `path`, atomically replacing any existing file.

    Raises:
        IoError: If the file cannot be written.
    """
    data = _serialize(index)
    atomic_write_bytes(path, data)
    logger.info("Saved %r to %s (%d bytes)", index, path, len(data))


@dataclass(frozen=True)
class IndexHeader:
    """Header fields of an index file, as reported by `inspect_index`."""
    version: int
    metric: Metric
    dim: int
    count: int
    model_id: str
    crc_ok: bool

    def describe(self):
        crc = "crc ok" if self.crc_ok else "crc MISMATCH"
        return (f"{MAGIC.decode()} v{self.version}, {self.metric.name}, "
                f"dim={self.dim}, n={self.count}, model={self.model_id}, {crc}")


def _read_file(path):
    try:
        with open(path, "rb") as file:
            return file.read()
    except OSError as e:
        raise IoError(f"Cannot read index {path}: {e}") from e


def _check_preamble(data, path):
    if len(data) < len(MAGIC):
        if MAGIC.startswith(data) and data:
            raise CorruptPayload(f"{path}: corrupt payload (truncated header)")
        raise BadMagic(f"{path}: bad magic, not an index file")
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:4]!r}")
    if len(data) < len(MAGIC) + 1:
        raise CorruptPayload(f"{path}: corrupt payload (truncated header)")
    version = data[len(MAGIC)]
    if version != VERSION:
        raise VersionUnsupported(f"{path}: unsupported index version {version}")


def _parse(data, path):
    """
    Parses everything but the checksum. Returns (header fields, ids, matrix).
    """
    end = len(data) - _U32.size
    try:
        _, version, metric_code, dim, count = _HEAD.unpack_from(data, 0)
        offset = _HEAD.size
        (model_len,) = _U16.unpack_from(data, offset)
        offset += _U16.size
        if offset + model_len > end:
            raise CorruptPayload(f"{path}: corrupt payload (truncated model id)")
        model_id = data[offset:offset + model_len].decode("utf-8")
        offset += model_len
        metric = Metric(metric_code)
        if dim < 1:
            raise CorruptPayload(f"{path}: corrupt payload (dim is zero)")
        if count < 1:
            raise CorruptPayload(f"{path}: corrupt payload (no entries)")
        if count * (_U16.size + 4 * dim) > end - offset:
            raise CorruptPayload(f"{path}: corrupt payload (truncated entries)")

        ids = []
        vectors = np.empty((count, dim), dtype=np.float32)
        row_bytes = 4 * dim
        for i in range(count):
            (id_len,) = _U16.unpack_from(data, offset)
            offset += _U16.size
            if offset + id_len + row_bytes > end:
                raise CorruptPayload(f"{path}: corrupt payload (truncated entry {i})")
            ids.append(data[offset:offset + id_len].decode("utf-8"))
            offset += id_len
            vectors[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
            offset += row_bytes
        if offset != end:
            raise CorruptPayload(f"{path}: corrupt payload ({end - offset} trailing bytes)")
    except CorruptPayload:
        raise
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        raise CorruptPayload(f"{path}: corrupt payload ({e})") from e
    return (version, metric, dim, count, model_id), ids, vectors


def _crc_ok(data):
    if len(data) < _U32.size:
        return False
    (stored,) = _U32.unpack_from(data, len(data) - _U32.size)
    return zlib.crc32(data[:-_U32.size]) & 0xFFFFFFFF == stored


def load_index(path):
    """
    Reads an index written by `save_index`.

    Returns:
        FlatIndex: Bit-identical to the saved index.

    Raises:
        IoError: The file cannot be read.
        BadMagic: The file does not start with the index magic.
        VersionUnsupported: Unknown format version.
        CorruptPayload: Truncation, checksum mismatch or invalid contents.
    """
    data = _read_file(path)
    _check_preamble(data, path)
    if len(data) < _HEAD.size + _U16.size + _U32.size:
        raise CorruptPayload(f"{path}: corrupt payload (truncated header)")
    if not _crc_ok(data):
        raise CorruptPayload(f"{path}: corrupt payload (checksum mismatch)")
    (_, metric, _, _, model_id), ids, vectors = _parse(data, path)

    if len(set(ids)) != len(ids) or not all(ids):
        raise CorruptPayload(f"{path}: corrupt payload (invalid record ids)")
    if not np.all(np.isfinite(vectors)):
        raise CorruptPayload(f"{path}: corrupt payload (non-finite vector values)")
    try:
        index = FlatIndex(ids, vectors, metric, model_id)
    except ZeroNorm as e:
        raise CorruptPayload(f"{path}: corrupt payload ({e})") from e
    logger.info("Loaded %r from %s", index, path)
    return index


def inspect_index(path):
    """
    Reads the header of an index file and verifies its checksum.

    A checksum mismatch is reported through `IndexHeader.crc_ok`; structural
    problems raise like `load_index` does.
    """
    data = _read_file(path)
    _check_preamble(data, path)
    if len(data) < _HEAD.size + _U16.size + _U32.size:
        raise CorruptPayload(f"{path}: corrupt payload (truncated header)")
    (version, metric, dim, count, model_id), _, _ = _parse(data, path)
    return IndexHeader(version, metric, dim, count, model_id, _crc_ok(data))
