import json
import random
import string
import unittest

from hypothesis import given, settings
from hypothesis import strategies as st

from reranksearch.errors import ParseFailure
from reranksearch.reranker import parse_reply

VALID = {f"r{i}" for i in range(1, 16)}


def adversarial_replies(rng, count):
    pieces = ['[', ']', '"', ',', 'r7', 'r99', '```', '```json\n', '\n', ' ',
              'null', '{', '}', ':', '\\', 'r1', '"r2"', '[[', ']]', '1e999']
    for _ in range(count):
        kind = rng.randrange(4)
        if kind == 0:
            yield "".join(rng.choice(pieces) for _ in range(rng.randint(0, 12)))
        elif kind == 1:
            yield "".join(rng.choice(string.printable) for _ in range(rng.randint(0, 40)))
        elif kind == 2:
            ids = [rng.choice(sorted(VALID) + ["r0", "x", ""]) for _ in range(rng.randint(0, 20))]
            text = json.dumps(ids)
            yield f"```json\n{text}\n```" if rng.random() < 0.5 else text
        else:
            yield "[" * rng.randint(1, 5000)


class TestParseReply(unittest.TestCase):
    def test_direct(self):
        self.assertEqual(parse_reply('["r7","r2","r9"]', VALID, 3), ["r7", "r2", "r9"])

    def test_fenced_filter_and_dedupe(self):
        reply = '```json\n["r7","r99","r7","r2"]\n```'
        self.assertEqual(parse_reply(reply, VALID, 3), ["r7", "r2"])

    def test_fence_without_tag(self):
        self.assertEqual(parse_reply('  ```\n["r1"]\n```  ', VALID, 3), ["r1"])

    def test_truncates(self):
        self.assertEqual(parse_reply('["r1","r2","r3","r4"]', VALID, 2), ["r1", "r2"])

    def test_empty_array(self):
        self.assertEqual(parse_reply("[]", VALID, 3), [])

    def test_prose_fails(self):
        with self.assertRaises(ParseFailure):
            parse_reply("Sure! The best items are r7 and r2.", VALID, 3)

    def test_wrong_shapes_fail(self):
        for reply in ['{"ids": ["r1"]}', '[1, 2]', '["r1", null]', '"r1"', '',
                      '```json\n```', '``` ["r1"] ``` trailing']:
            with self.subTest(reply=reply):
                with self.assertRaises(ParseFailure):
                    parse_reply(reply, VALID, 3)

    def test_non_text(self):
        with self.assertRaises(ParseFailure):
            parse_reply(None, VALID, 3)

    def test_fuzz_adversarial(self):
        rng = random.Random(2024)
        for reply in adversarial_replies(rng, 10000):
            try:
                selected = parse_reply(reply, VALID, 3)
            except ParseFailure:
                continue
            self.assertLessEqual(len(selected), 3)
            self.assertTrue(set(selected) <= VALID)
            self.assertEqual(len(selected), len(set(selected)))

    @settings(max_examples=500, deadline=None)
    @given(st.text(), st.integers(1, 5))
    def test_fuzz_text(self, reply, top_n):
        try:
            selected = parse_reply(reply, VALID, top_n)
        except ParseFailure:
            return
        self.assertLessEqual(len(selected), top_n)
        self.assertTrue(set(selected) <= VALID)

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.sampled_from(sorted(VALID) + ["zz", "r16"])), st.integers(1, 5))
    def test_fuzz_arrays(self, ids, top_n):
        selected = parse_reply(json.dumps(ids), VALID, top_n)
        expected = list(dict.fromkeys(i for i in ids if i in VALID))[:top_n]
        self.assertEqual(selected, expected)


if __name__ == '__main__':
    unittest.main()
