import itertools
import json
import unittest

from reranksearch.embedder import LocalEmbedder
from reranksearch.errors import DataError, UnknownRelevantId, UsageError
from reranksearch.evaluation import Category, JudgedQuery, precision_at_n, run_eval
from reranksearch.index import build_index
from reranksearch.ingest import Record
from reranksearch.pipeline import Mode, PipelineConfig
from reranksearch.reranker import ChatClient, FailingChatClient

ROWS = [
    ("d1", "Fish and Chips", "battered fish with fried potatoes"),
    ("d2", "Sushi", "vinegared rice with raw fish"),
    ("d3", "Falafel", "fried balls of ground chickpeas"),
    ("d4", "Ramen", "Japanese noodle soup with pork"),
    ("d5", "Tiramisu", "Italian coffee dessert"),
    ("d6", "Pad Thai", "stir fried rice noodles"),
]

QUERIES = [
    JudgedQuery("q1", "fried fish", "simple", ["d1", "d2"]),
    JudgedQuery("q2", "noodles without pork", "complex", ["d6"]),
    JudgedQuery("q3", "dessert", "simple", ["d5"]),
]


class LastCandidateClient(ChatClient):
    """Picks the last shortlisted candidate."""

    def complete(self, system_text, user_text):
        last_line = user_text.rsplit("\n", 1)[-1]
        return json.dumps([last_line.split(". ", 1)[0]])


def counting_clock():
    return itertools.count().__next__


class TestRunEval(unittest.TestCase):
    def setUp(self):
        self.corpus = [Record(record_id, (("title", title), ("description", text)),
                              ("title", "description"))
                       for record_id, title, text in ROWS]
        self.provider = LocalEmbedder(64)
        vectors = self.provider.embed_batch([r.document for r in self.corpus])
        self.index = build_index(
            list(zip([r.id for r in self.corpus], vectors)), "cosine")
        self.config = PipelineConfig(shortlist_k=4, top_n=3)

    def run_eval(self, **kwargs):
        options = dict(config=self.config, clock=counting_clock())
        options.update(kwargs)
        return run_eval(self.corpus, self.index, self.provider,
                        options.pop("chat_client", LastCandidateClient()),
                        options.pop("queries", QUERIES), **options)

    def test_rows(self):
        report = self.run_eval()
        self.assertEqual([(row.query_id, row.mode, row.k) for row in report.per_query],
                         [(q, mode, 4) for q in ("q1", "q2", "q3")
                          for mode in (Mode.assisted, Mode.raw)])
        self.assertEqual(report.sweep_rows, [])
        self.assertIsNone(report.k_sweep)
        for row in report.per_query:
            query = next(q for q in QUERIES if q.query_id == row.query_id)
            self.assertEqual(row.category, query.category)
            self.assertEqual(row.precision,
                             precision_at_n(list(row.result_ids), query.relevant_ids, 3))
            if row.mode is Mode.assisted:
                self.assertEqual(len(row.result_ids), 1)
                self.assertEqual(row.stage1_ranks, (4,))
            else:
                self.assertEqual(row.stage1_ranks, (1, 2, 3))

    def test_aggregates(self):
        report = self.run_eval()
        aggregates = report.aggregates
        for mode in Mode:
            for category in Category:
                values = [row.precision for row in report.per_query
                          if row.mode is mode and row.category is category]
                self.assertAlmostEqual(aggregates[(mode, category)],
                                       sum(values) / len(values))

    def test_k_sweep(self):
        report = self.run_eval(k_values=[3, 5, 6])
        self.assertEqual(len(report.sweep_rows), 3 * len(QUERIES) * 2)
        self.assertEqual(len(report.per_query), len(QUERIES) * 2)
        self.assertEqual([(k, mode) for k, mode, _ in report.k_sweep],
                         [(k, mode) for k in (3, 5, 6) for mode in (Mode.assisted, Mode.raw)])
        raw_means = {mean for k, mode, mean in report.k_sweep if mode is Mode.raw}
        self.assertEqual(len(raw_means), 1)

    def test_sweep_with_shortlist_size(self):
        report = self.run_eval(k_values=[4, 6])
        self.assertEqual(len(report.sweep_rows), 2 * len(QUERIES) * 2)
        self.assertTrue(all(row in report.sweep_rows for row in report.per_query))

    def test_sweep_past_corpus_size_is_identical(self):
        report = self.run_eval(k_values=[6, 20])
        by_k = {k: [(row.query_id, row.mode, row.result_ids) for row in report.sweep_rows
                    if row.k == k] for k in (6, 20)}
        self.assertEqual(by_k[6], by_k[20])

    def test_failing_client_matches_raw(self):
        report = self.run_eval(chat_client=FailingChatClient())
        self.assertEqual(report.degraded_counts, {Mode.assisted: 3, Mode.raw: 0})
        for query in QUERIES:
            self.assertEqual(report.precision(query.query_id, "assisted"),
                             report.precision(query.query_id, "raw"))
        reasons = {row.degraded_reason for row in report.per_query if row.mode is Mode.assisted}
        self.assertEqual(reasons, {"transport_failure"})

    def test_latency(self):
        report = self.run_eval()
        latency = report.latency
        self.assertEqual(latency[Mode.raw],
                         {"embed_ms": 1000.0, "search_ms": 1000.0, "rerank_ms": None})
        self.assertEqual(latency[Mode.assisted],
                         {"embed_ms": 1000.0, "search_ms": 1000.0, "rerank_ms": 1000.0})

    def test_deterministic(self):
        first = self.run_eval(k_values=[3, 5]).to_json()
        second = self.run_eval(k_values=[3, 5]).to_json()
        self.assertEqual(first, second)

    def test_workers(self):
        serial = self.run_eval(k_values=[3, 5])
        threaded = self.run_eval(k_values=[3, 5], workers=4, clock=lambda: 0.0)
        key = lambda report: [(row.query_id, row.mode, row.k, row.result_ids, row.precision)
                              for row in report.per_query + report.sweep_rows]
        self.assertEqual(key(serial), key(threaded))

    def test_single_mode(self):
        report = self.run_eval(chat_client=None, modes=["raw"])
        self.assertEqual({row.mode for row in report.per_query}, {Mode.raw})
        self.assertEqual(report.modes, [Mode.raw])

    def test_json_report(self):
        report = self.run_eval(k_values=[3, 5])
        data = json.loads(report.to_json())
        self.assertEqual(data["top_n"], 3)
        self.assertEqual(data["shortlist_k"], 4)
        self.assertEqual(len(data["per_query"]), 6)
        self.assertEqual(len(data["k_sweep"]), 4)
        self.assertEqual(set(data["latency_ms"]), {"raw", "assisted"})
        self.assertEqual(data["per_query"][0]["mode"], "assisted")
        table = report.format_table()
        self.assertIn("P@3", table)
        self.assertIn("complex", table)

    def test_guards(self):
        with self.assertRaises(UsageError):
            self.run_eval(k_values=[2])
        with self.assertRaises(UsageError):
            self.run_eval(chat_client=None)
        with self.assertRaises(UsageError):
            self.run_eval(workers=0)
        with self.assertRaises(UnknownRelevantId):
            self.run_eval(queries=[JudgedQuery("q9", "fish", "simple", ["zzz"])])
        with self.assertRaises(DataError):
            run_eval(self.corpus[:3], self.index, self.provider, FailingChatClient(),
                     QUERIES[:1], self.config)
        with self.assertRaises(KeyError):
            self.run_eval().precision("q9", "raw")


if __name__ == '__main__':
    unittest.main()
