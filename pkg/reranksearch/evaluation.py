"""
Raw-versus-assisted relevance evaluation over judged query sets.
"""
import enum
import json
import logging
import time
from collections import defaultdict
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from typing import FrozenSet, Optional, Tuple

from reranksearch.errors import (
    DataError, InvalidK, IoError, UnknownRelevantId, UsageError)
from reranksearch.pipeline import Mode, PipelineConfig, Timings, run_search

logger = logging.getLogger(__name__)


class Category(enum.Enum):
    simple = "simple"
    complex = "complex"


@dataclass(frozen=True)
class JudgedQuery:
    query_id: str
    text: str
    category: Category
    relevant_ids: FrozenSet[str]

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "relevant_ids", frozenset(self.relevant_ids))
        if not self.text or not self.text.strip():
            raise DataError(f"Query {self.query_id!r} has empty text")


def load_queries(path):
    """
    Reads a judgment file: a JSON array of objects with "query_id", "text",
    "category" ("simple" or "complex") and "relevant_ids".

    Returns:
        list: `JudgedQuery` objects in file order.

    Raises:
        IoError: The file cannot be read.
        DataError: Invalid JSON, missing fields, unknown category or a
            repeated query id.
    """
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = json.load(file)
    except OSError as e:
        raise IoError(f"Cannot read queries {path}: {e}") from e
    except ValueError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, list):
        raise DataError(f"{path}: expected a JSON array of queries")

    queries = []
    seen = set()
    for i, item in enumerate(data):
        try:
            query_id = item["query_id"]
            relevant = item["relevant_ids"]
            if not isinstance(query_id, str) or not isinstance(relevant, list) \
                    or not all(isinstance(x, str) for x in relevant):
                raise TypeError("query_id must be a string and relevant_ids a list of strings")
            query = JudgedQuery(query_id, item["text"], item["category"], relevant)
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise DataError(f"{path}: query #{i} is invalid ({e})") from e
        if query.query_id in seen:
            raise DataError(f"{path}: duplicate query id {query.query_id!r}")
        seen.add(query.query_id)
        queries.append(query)
    return queries


def validate_judgments(queries, corpus_ids):
    """
    Raises:
        UnknownRelevantId: If a judgment names an id missing from the corpus.
    """
    corpus_ids = set(corpus_ids)
    for query in queries:
        for record_id in sorted(query.relevant_ids):
            if record_id not in corpus_ids:
                raise UnknownRelevantId(query.query_id, record_id)


def precision_at_n(result_ids, relevant, n):
    """
    Fraction of `n` result slots holding a relevant id.

    The denominator is always `n`, so returning fewer results is penalized.

    ```python
    precision_at_n(["r1", "r4", "r5"], {"r1", "r4"}, 3)
    0.6666666666666666
    ```
    """
    if n < 1:
        raise InvalidK(f"n must be positive, got {n}")
    return len(set(result_ids[:n]) & set(relevant)) / n


@dataclass(frozen=True)
class EvalRow:
    query_id: str
    category: Category
    mode: Mode
    k: int
    precision: float
    result_ids: Tuple[str, ...]
    stage1_ranks: Tuple[Optional[int], ...]
    degraded: bool
    degraded_reason: Optional[str]
    timings: Timings

    def to_dict(self):
        return {
            "query_id": self.query_id,
            "category": self.category.value,
            "mode": self.mode.value,
            "k": self.k,
            "precision_at_n": self.precision,
            "result_ids": list(self.result_ids),
            "stage1_ranks": list(self.stage1_ranks),
            "degraded": self.degraded,
            "degraded_reason": self.degraded_reason,
            "timings": {
                "embed_ms": self.timings.embed_ms,
                "search_ms": self.timings.search_ms,
                "rerank_ms": self.timings.rerank_ms,
            },
        }


def _mean(values):
    values = list(values)
    return sum(values) / len(values) if values else None


class EvalReport:
    """
    Outcome of `run_eval`.

    Attributes:
        per_query (list): One `EvalRow` per query and mode at `shortlist_k`.
        sweep_rows (list): One `EvalRow` per k, mode and query when a sweep
            was requested, otherwise empty.
        top_n (int): Precision cut-off.
        shortlist_k (int): Shortlist size of `per_query`.
        k_values (list or None): Swept shortlist sizes.
    """

    def __init__(self, per_query, sweep_rows, top_n, shortlist_k, k_values=None):
        self.per_query = list(per_query)
        self.sweep_rows = list(sweep_rows)
        self.top_n = top_n
        self.shortlist_k = shortlist_k
        self.k_values = list(k_values) if k_values else None

    @property
    def modes(self):
        return sorted({row.mode for row in self.per_query}, key=lambda m: m.value)

    @property
    def aggregates(self):
        """{(mode, category): mean precision} over `per_query`."""
        groups = defaultdict(list)
        for row in self.per_query:
            groups[(row.mode, row.category)].append(row.precision)
        return {key: _mean(values) for key, values in
                sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))}

    @property
    def k_sweep(self):
        """[(k, mode, mean precision)] or None when no sweep was run."""
        if not self.k_values:
            return None
        groups = defaultdict(list)
        for row in self.sweep_rows:
            groups[(row.k, row.mode)].append(row.precision)
        return [(k, mode, _mean(values)) for (k, mode), values in
                sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value))]

    @property
    def latency(self):
        """{mode: {"embed_ms", "search_ms", "rerank_ms"}} means over `per_query`."""
        result = {}
        for mode in self.modes:
            rows = [row for row in self.per_query if row.mode is mode]
            rerank = [row.timings.rerank_ms for row in rows
                      if row.timings.rerank_ms is not None]
            result[mode] = {
                "embed_ms": _mean(row.timings.embed_ms for row in rows),
                "search_ms": _mean(row.timings.search_ms for row in rows),
                "rerank_ms": _mean(rerank),
            }
        return result

    @property
    def degraded_counts(self):
        return {mode: sum(row.degraded for row in self.per_query if row.mode is mode)
                for mode in self.modes}

    def precision(self, query_id, mode):
        for row in self.per_query:
            if row.query_id == query_id and row.mode is Mode(mode):
                return row.precision
        raise KeyError((query_id, mode))

    def to_dict(self):
        sweep = self.k_sweep
        return {
            "top_n": self.top_n,
            "shortlist_k": self.shortlist_k,
            "per_query": [row.to_dict() for row in self.per_query],
            "aggregates": [
                {"mode": mode.value, "category": category.value,
                 "mean_precision_at_n": mean}
                for (mode, category), mean in self.aggregates.items()],
            "k_sweep": None if sweep is None else [
                {"k": k, "mode": mode.value, "mean_precision_at_n": mean}
                for k, mode, mean in sweep],
            "sweep_rows": [row.to_dict() for row in self.sweep_rows],
            "latency_ms": {mode.value: values for mode, values in self.latency.items()},
            "degraded_counts": {mode.value: count
                                for mode, count in self.degraded_counts.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self):
        """Human-readable summary of aggregates, sweep and latency."""
        lines = [f"{'mode':<10}{'category':<10}{f'P@{self.top_n}':>8}"]
        for (mode, category), mean in self.aggregates.items():
            lines.append(f"{mode.value:<10}{category.value:<10}{mean:>8.3f}")
        if self.k_sweep:
            lines.append("")
            lines.append(f"{'k':<6}{'mode':<10}{f'P@{self.top_n}':>8}")
            for k, mode, mean in self.k_sweep:
                lines.append(f"{k:<6}{mode.value:<10}{mean:>8.3f}")
        lines.append("")
        lines.append(f"{'mode':<10}{'embed_ms':>10}{'search_ms':>11}"
                     f"{'rerank_ms':>11}{'degraded':>10}")
        counts = self.degraded_counts
        for mode, values in self.latency.items():
            rerank = values["rerank_ms"]
            rerank = "-" if rerank is None else f"{rerank:.2f}"
            lines.append(f"{mode.value:<10}{values['embed_ms']:>10.2f}"
                         f"{values['search_ms']:>11.2f}{rerank:>11}{counts[mode]:>10}")
        return "\n".join(lines)


def _evaluate(query, mode, k, index, provider, chat_client, config, documents, clock):
    run_config = PipelineConfig(shortlist_k=k, top_n=config.top_n, mode=mode,
                                pad_to_n=config.pad_to_n)
    result = run_search(query.text, index, provider, chat_client, run_config,
                        documents, clock)
    return EvalRow(
        query.query_id, query.category, mode, k,
        precision_at_n(result.ids, query.relevant_ids, config.top_n),
        tuple(result.ids), tuple(row.stage1_rank for row in result.results),
        result.degraded, result.degraded_reason, result.timings)


def run_eval(corpus, index, provider, chat_client, queries, config=None,
             k_values=None, modes=(Mode.raw, Mode.assisted), workers=1,
             clock=time.perf_counter):
    """
    Runs every judged query through the pipeline in each mode.

    Args:
        corpus (list): `Record`s the index was built from.
        index (FlatIndex): Index over `corpus`.
        provider (EmbeddingProvider): Query embedder matching the index model.
        chat_client (ChatClient): Reranker for assisted mode.
        queries (list): `JudgedQuery` objects.
        config (PipelineConfig): `shortlist_k`, `top_n` and `pad_to_n`.
        k_values (list): Optional shortlist sizes to sweep.
        modes (tuple): Modes to run.
        workers (int): Pipeline calls run concurrently on this many threads.
        clock (callable): Passed to the pipeline for timings.

    Returns:
        EvalReport: Rows ordered by query id, mode and k.

    Raises:
        UnknownRelevantId: A judgment names a record absent from the corpus.
        DataError: The index holds ids absent from the corpus.
        UsageError: A swept k is smaller than `top_n`, or assisted mode
            without a chat client.
    """
    config = config or PipelineConfig()
    modes = sorted({Mode(mode) for mode in modes}, key=lambda m: m.value)
    if not modes:
        raise UsageError("At least one mode must be evaluated")
    if Mode.assisted in modes and chat_client is None:
        raise UsageError("Assisted evaluation needs a chat client")
    if workers < 1:
        raise UsageError(f"workers must be positive, got {workers}")

    documents = {record.id: record.document for record in corpus}
    unknown = [record_id for record_id in index.ids if record_id not in documents]
    if unknown:
        raise DataError(f"Index holds {len(unknown)} ids missing from the corpus, "
                        f"e.g. {unknown[0]!r}")
    validate_judgments(queries, documents)

    k_values = list(dict.fromkeys(k_values)) if k_values else None
    for k in k_values or ():
        if k < config.top_n:
            raise UsageError(f"Swept k={k} is smaller than top_n={config.top_n}")
    ks = sorted(set(k_values or ()) | {config.shortlist_k})

    tasks = [(query, mode, k, index, provider, chat_client, config, documents, clock)
             for query in queries for mode in modes for k in ks]
    logger.info("Evaluating %d queries x %d modes x %d shortlist sizes",
                len(queries), len(modes), len(ks))
    if workers == 1:
        rows = [_evaluate(*task) for task in tasks]
    else:
        with ThreadPool(workers) as p:
            rows = p.starmap(_evaluate, tasks)
    rows.sort(key=lambda row: (row.query_id, row.mode.value, row.k))

    per_query = [row for row in rows if row.k == config.shortlist_k]
    sweep_rows = [row for row in rows if k_values and row.k in k_values]
    report = EvalReport(per_query, sweep_rows, config.top_n, config.shortlist_k,
                        k_values)
    logger.info("Evaluation done: %s", {
        f"{mode.value}/{category.value}": round(mean, 4)
        for (mode, category), mean in report.aggregates.items()})
    return report
