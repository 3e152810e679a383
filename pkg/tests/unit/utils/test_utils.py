import os
import shutil
import tempfile
import unittest

from reranksearch.errors import IoError, UsageError
from reranksearch.utils import atomic_write_bytes, chunked, elapsed_ms, parse_int_list


class TestChunked(unittest.TestCase):
    def test_chunked(self):
        self.assertEqual(chunked([1, 2, 3, 4, 5], 2), [[1, 2], [3, 4], [5]])
        self.assertEqual(chunked([], 64), [])
        self.assertEqual([len(c) for c in chunked(range(130), 64)], [64, 64, 2])
        with self.assertRaises(UsageError):
            chunked([1], 0)


class TestParseIntList(unittest.TestCase):
    def test_parse(self):
        self.assertEqual(parse_int_list("5,10,15,20,30"), [5, 10, 15, 20, 30])
        self.assertEqual(parse_int_list(" 10, 5 ,10,"), [10, 5])

    def test_invalid(self):
        for text in ["", "5,x", "0", "-3", ","]:
            with self.subTest(text=text):
                with self.assertRaises(UsageError):
                    parse_int_list(text)


class TestAtomicWrite(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_write_and_replace(self):
        path = os.path.join(self.tmp_dir, "out.bin")
        atomic_write_bytes(path, b"first")
        atomic_write_bytes(path, b"second")
        with open(path, "rb") as f:
            self.assertEqual(f.read(), b"second")
        self.assertEqual(os.listdir(self.tmp_dir), ["out.bin"])

    def test_missing_directory(self):
        with self.assertRaises(IoError):
            atomic_write_bytes(os.path.join(self.tmp_dir, "no", "out.bin"), b"x")


class TestElapsedMs(unittest.TestCase):
    def test_elapsed(self):
        self.assertEqual(elapsed_ms(2.0, 2.5), 500.0)


if __name__ == '__main__':
    unittest.main()
