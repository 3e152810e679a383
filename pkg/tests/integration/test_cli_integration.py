import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

from reranksearch.cli import main
from reranksearch.config import API_KEY_ENV
from reranksearch.ingest import documents_path, fixture_path

FOOD_CSV = fixture_path("food.csv")
FOOD_QUERIES = fixture_path("food_queries.json")
LEXICON_CLIENT = "scripted:" + fixture_path("chat_lexicon.json")


def run_cli(*argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        code = main(list(argv))
    return code, stdout.getvalue(), stderr.getvalue()


class TestCliIntegration(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp_dir = tempfile.mkdtemp()
        cls.index = os.path.join(cls.tmp_dir, "food.idx")
        cls.build = run_cli("build", "--csv", FOOD_CSV,
                            "--text-cols", "title,description", "--out", cls.index)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp_dir)

    def path(self, name):
        return os.path.join(self.tmp_dir, name)

    def copy_index(self, name):
        path = self.path(name)
        shutil.copyfile(self.index, path)
        shutil.copyfile(documents_path(self.index), documents_path(path))
        return path

    def test_build(self):
        code, out, _ = self.build
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith(
            "43 records indexed (dim=256, model=local-fnv256, metric=cosine) in "))
        self.assertTrue(os.path.exists(documents_path(self.index)))

    def test_inspect(self):
        code, out, _ = run_cli("inspect", "--index", self.index)
        self.assertEqual(code, 0)
        self.assertEqual(out.strip(),
                         "VSIX v1, cosine, dim=256, n=43, model=local-fnv256, crc ok")

    def test_search_raw_json(self):
        code, out, _ = run_cli("search", "--index", self.index, "--json",
                               "--query", "food with no fish or shrimp")
        self.assertEqual(code, 0)
        result = json.loads(out)
        self.assertEqual([row["record_id"] for row in result["results"]],
                         ["r0010", "r0007", "r0024"])
        self.assertEqual(result["mode"], "raw")
        self.assertIsNone(result["timings"]["rerank_ms"])

    def test_search_assisted_table(self):
        code, out, _ = run_cli("search", "--index", self.index, "--mode", "assisted",
                               "--provider", LEXICON_CLIENT,
                               "--query", "food with no fish or shrimp")
        self.assertEqual(code, 0)
        lines = out.splitlines()
        self.assertEqual([line.split()[1] for line in lines[1:]],
                         ["r0024", "r0030", "r0017"])
        self.assertNotIn("degraded", out)

    def test_search_documents_from_csv(self):
        code, out, _ = run_cli("search", "--index", self.index, "--query", "curry",
                               "--csv", FOOD_CSV, "--text-cols", "title,description",
                               "--json", "--n", "1")
        self.assertEqual(code, 0)
        row = json.loads(out)["results"][0]
        self.assertTrue(row["document"].startswith("title: "))

    def test_search_degraded(self):
        fixture = self.path("fail.json")
        with open(fixture, "w", encoding="utf-8") as f:
            json.dump({"fail": True}, f)
        code, out, _ = run_cli("search", "--index", self.index, "--mode", "assisted",
                               "--provider", "scripted:" + fixture, "--query", "curry")
        self.assertEqual(code, 0)
        self.assertIn("degraded: transport_failure", out)

    def test_eval_report(self):
        report_path = self.path("report.json")
        code, out, _ = run_cli("eval", "--index", self.index, "--csv", FOOD_CSV,
                               "--text-cols", "title,description",
                               "--queries", FOOD_QUERIES, "--provider", LEXICON_CLIENT,
                               "--k-sweep", "5,10,15", "--out", report_path)
        self.assertEqual(code, 0)
        self.assertIn("P@3", out)
        with open(report_path, encoding="utf-8") as f:
            report = json.load(f)
        self.assertEqual(len(report["per_query"]), 24)
        self.assertEqual(len(report["k_sweep"]), 6)
        self.assertEqual(len(report["sweep_rows"]), 3 * 12 * 2)
        means = {(a["mode"], a["category"]): a["mean_precision_at_n"]
                 for a in report["aggregates"]}
        self.assertGreater(means[("assisted", "complex")], means[("raw", "complex")])

    def test_eval_default_text_columns(self):
        code, _, _ = run_cli("eval", "--index", self.index, "--csv", FOOD_CSV,
                             "--queries", FOOD_QUERIES, "--mode", "raw")
        self.assertEqual(code, 0)

    def test_usage_errors(self):
        cases = [
            ("search", "--index", self.index, "--query", "curry", "--n", "0"),
            ("search", "--index", self.index, "--query", "curry", "--k", "2"),
            ("build", "--csv", FOOD_CSV, "--out", self.path("x.idx")),
            ("build", "--csv", FOOD_CSV, "--text-cols", "title", "--batch-size", "65",
             "--out", self.path("x.idx")),
            ("search", "--index", self.index, "--query", "curry", "--mode", "assisted",
             "--provider", "oracle"),
            ("eval", "--index", self.index, "--csv", FOOD_CSV, "--queries", FOOD_QUERIES,
             "--mode", "raw", "--k-sweep", "1,x"),
            ("frobnicate",),
        ]
        for argv in cases:
            with self.subTest(argv=argv):
                code, _, err = run_cli(*argv)
                self.assertEqual(code, 1)
                self.assertIn("usage:", err)

    def test_missing_api_key(self):
        with mock.patch.dict(os.environ):
            os.environ.pop(API_KEY_ENV, None)
            code, _, err = run_cli("build", "--csv", FOOD_CSV, "--text-cols", "title",
                                   "--provider", "remote", "--out", self.path("r.idx"))
        self.assertEqual(code, 3)
        self.assertIn(API_KEY_ENV, err)

    def test_unknown_relevant_id(self):
        queries = self.path("bad_queries.json")
        with open(queries, "w", encoding="utf-8") as f:
            json.dump([{"query_id": "q1", "text": "curry", "category": "simple",
                        "relevant_ids": ["zzz"]}], f)
        code, _, err = run_cli("eval", "--index", self.index, "--csv", FOOD_CSV,
                               "--queries", queries, "--mode", "raw")
        self.assertEqual(code, 2)
        self.assertIn("zzz", err)

    def test_missing_column(self):
        code, _, err = run_cli("build", "--csv", FOOD_CSV, "--text-cols", "title,price",
                               "--out", self.path("y.idx"))
        self.assertEqual(code, 2)
        self.assertIn("price", err)

    def test_truncated_index(self):
        path = self.copy_index("truncated.idx")
        with open(path, "rb") as f:
            data = f.read()
        with open(path, "wb") as f:
            f.write(data[:len(data) // 2])
        code, _, err = run_cli("search", "--index", path, "--query", "curry")
        self.assertEqual(code, 2)
        self.assertIn("corrupt payload", err)

    def test_bad_magic(self):
        path = self.copy_index("magic.idx")
        with open(path, "r+b") as f:
            f.write(b"JUNK")
        code, _, err = run_cli("inspect", "--index", path)
        self.assertEqual(code, 2)
        self.assertIn("bad magic", err)

    def test_checksum_mismatch(self):
        path = self.copy_index("crc.idx")
        with open(path, "r+b") as f:
            f.seek(100)
            byte = f.read(1)
            f.seek(100)
            f.write(bytes([byte[0] ^ 0xFF]))
        code, out, err = run_cli("inspect", "--index", path)
        self.assertEqual(code, 2)
        self.assertIn("crc MISMATCH", out)
        self.assertIn("corrupt payload", err)
        code, _, _ = run_cli("search", "--index", path, "--query", "curry")
        self.assertEqual(code, 2)

    def test_missing_index(self):
        code, _, _ = run_cli("inspect", "--index", self.path("absent.idx"))
        self.assertEqual(code, 2)


if __name__ == '__main__':
    unittest.main()
