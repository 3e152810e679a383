import unittest

from hypothesis import given, settings
from hypothesis import strategies as st

from reranksearch.ingest import Record, compose_document


class TestComposeDocument(unittest.TestCase):
    def test_two_fields(self):
        fields = [("title", "Sushi"), ("description", "Vinegared rice...")]
        self.assertEqual(compose_document(fields, ["title", "description"]),
                         "title: Sushi, description: Vinegared rice...")

    def test_selection(self):
        self.assertEqual(compose_document([("a", "x"), ("b", "y")], ["b"]), "b: y")

    def test_empty_value_preserved(self):
        self.assertEqual(compose_document([("a", ""), ("b", "y")], ["a", "b"]),
                         "a: , b: y")

    def test_field_order_wins_over_included_order(self):
        self.assertEqual(compose_document([("a", "x"), ("b", "y")], ["b", "a"]),
                         "a: x, b: y")

    def test_record_document_is_derived(self):
        record = Record("r0001", [("title", "Pho"), ("origin", "Vietnam")], ["title"])
        self.assertEqual(record.document, "title: Pho")
        with self.assertRaises(TypeError):
            Record("r0001", [], [], document="hand set")

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.text(alphabet="abcdef", min_size=1, max_size=4),
                              st.text(alphabet="xyz ,", max_size=6)),
                    min_size=1, max_size=6, unique_by=lambda pair: pair[0]),
           st.data())
    def test_separator_count(self, fields, data):
        names = [name for name, _ in fields]
        included = data.draw(st.lists(st.sampled_from(names), min_size=1, unique=True))
        document = compose_document(fields, included)
        inside_values = sum(value.count(": ") for name, value in fields if name in included)
        self.assertEqual(document.count(": "), len(included) + inside_values)


if __name__ == '__main__':
    unittest.main()
