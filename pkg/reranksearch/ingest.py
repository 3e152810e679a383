import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

from reranksearch.errors import (
    DataError, DuplicateId, EmptyCorpus, IoError, MalformedCsv, MissingColumn,
    UsageError)
from reranksearch.utils import atomic_write_bytes

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


@dataclass(frozen=True)
class CorpusSchema:
    """
    Describes how CSV columns map onto records.

    Attributes:
        id_column (str or None): Column holding record ids. When None, ids are
            zero-padded row ordinals ("r0001", "r0002", ...).
        text_columns (tuple): Columns composed into the searchable document.
    """
    id_column: Optional[str] = None
    text_columns: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "text_columns", tuple(self.text_columns))
        if not self.text_columns:
            raise UsageError("text_columns must name at least one column")

    @classmethod
    def from_flags(cls, id_column, text_columns):
        """
        Builds a schema from command-line style values.

        Args:
            id_column (str or None): Name of the id column, if any.
            text_columns (str): Comma separated column names, e.g. "title,description".

        Returns:
            CorpusSchema: The parsed schema.
        """
        names = [name.strip() for name in (text_columns or "").split(",")]
        return cls(id_column=id_column or None,
                   text_columns=tuple(name for name in names if name))


FOOD_SCHEMA = CorpusSchema(text_columns=("title", "description"))
TOURIST_SCHEMA = CorpusSchema(
    text_columns=("name", "city", "country", "description"))


@dataclass(frozen=True)
class Record:
    """
    One corpus row.

    The `document` attribute is derived from `fields` and `text_columns` by
    `compose_document` and cannot be passed in.
    """
    id: str
    fields: Tuple[Tuple[str, str], ...]
    text_columns: Tuple[str, ...]
    document: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(
            (name, value) for name, value in self.fields))
        object.__setattr__(self, "text_columns", tuple(self.text_columns))
        object.__setattr__(self, "document", compose_document(
            self.fields, self.text_columns))

    def get(self, column, default=None):
        for name, value in self.fields:
            if name == column:
                return value
        return default


def compose_document(fields, included):
    """
    Renders the searchable text of a record.

    Args:
        fields (list): Ordered (column name, value) pairs.
        included (list): Column names to include.

    Returns:
        str: "name: value" for every included field, in field order, joined by ", ".

    ```python
    compose_document([("title", "Sushi"), ("description", "Vinegared rice")],
                     ["title", "description"])
    'title: Sushi, description: Vinegared rice'
    ```
    """
    included = set(included)
    return ", ".join(f"{name}: {value}" for name, value in fields
                     if name in included)


def load_csv(path, schema):
    """
    Parses a UTF-8, RFC 4180 CSV file into records.

    Args:
        path (str): Path to the CSV file. The header row is mandatory.
        schema (CorpusSchema): Id and text columns.

    Returns:
        list: One `Record` per data row, in file order.

    Raises:
        MissingColumn: The schema names a column absent from the header.
        DuplicateId: Two rows share an id.
        EmptyCorpus: The file has a header but no data rows.
        MalformedCsv: Quoting or row-length violations, or invalid UTF-8.
        IoError: The file cannot be opened.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as file:
            rows = _read_rows(file, path)
    except UnicodeDecodeError as e:
        raise MalformedCsv(f"{path}: not valid UTF-8 ({e.reason})") from e
    except OSError as e:
        raise IoError(f"Cannot read {path}: {e}") from e

    if not rows:
        raise MalformedCsv(f"{path}: missing header row")
    header, data = rows[0], rows[1:]

    for column in schema.text_columns:
        if column not in header:
            raise MissingColumn(column, header)
    if schema.id_column is not None and schema.id_column not in header:
        raise MissingColumn(schema.id_column, header)
    if not data:
        raise EmptyCorpus(f"{path}: no data rows")

    records = []
    seen = set()
    for ordinal, (line_num, row) in enumerate(data, start=1):
        if len(row) != len(header):
            raise MalformedCsv(
                f"{path}:{line_num}: expected {len(header)} fields, got {len(row)}")
        fields = tuple(zip(header, row))
        if schema.id_column is None:
            record_id = f"r{ordinal:04d}"
        else:
            record_id = row[header.index(schema.id_column)]
            if not record_id:
                raise MalformedCsv(f"{path}:{line_num}: empty id")
        if record_id in seen:
            raise DuplicateId(record_id)
        seen.add(record_id)
        records.append(Record(record_id, fields, schema.text_columns))

    logger.info("Loaded %d records from %s", len(records), path)
    return records


def _read_rows(file, path):
    # Header row first, then (line number, row) pairs; blank lines are skipped.
    reader = csv.reader(file, dialect="excel", strict=True)
    rows = []
    try:
        for row in reader:
            if not row:
                continue
            if not rows:
                rows.append(row)
            else:
                rows.append((reader.line_num, row))
    except csv.Error as e:
        raise MalformedCsv(f"{path}:{reader.line_num}: {e}") from e
    return rows


def read_header(path):
    """
    Returns the header row of a CSV file as a list of column names.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as file:
            for row in csv.reader(file, dialect="excel", strict=True):
                if row:
                    return row
    except UnicodeDecodeError as e:
        raise MalformedCsv(f"{path}: not valid UTF-8 ({e.reason})") from e
    except csv.Error as e:
        raise MalformedCsv(f"{path}: {e}") from e
    except OSError as e:
        raise IoError(f"Cannot read {path}: {e}") from e
    raise MalformedCsv(f"{path}: missing header row")


def default_schema(path, id_column=None):
    """
    Schema using every column except `id_column` as text.
    """
    return CorpusSchema(id_column=id_column or None, text_columns=tuple(
        column for column in read_header(path) if column != id_column))


def records_by_id(records):
    """
    Maps record ids to records.
    """
    return {record.id: record for record in records}


def fixture_path(name):
    """
    Returns the path of a bundled fixture file, e.g. "food.csv".
    """
    return os.path.join(DATA_DIR, name)


def documents_path(index_path):
    """
    Path of the document sidecar written next to an index file.
    """
    return index_path + ".docs.json"


def save_documents(records, path):
    """
    Writes the id -> document mapping of `records` as a UTF-8 JSON object,
    in record order.

    Raises:
        IoError: If the file cannot be written.
    """
    payload = json.dumps({record.id: record.document for record in records},
                         ensure_ascii=False, indent=1)
    atomic_write_bytes(path, payload.encode("utf-8"))


def load_documents(path):
    """
    Reads a sidecar written by `save_documents`.

    Returns:
        dict: Record id -> document text.

    Raises:
        IoError: The file cannot be read.
        DataError: The file is not a JSON object of strings.
    """
    try:
        with open(path, "r", encoding="utf-8") as file:
            documents = json.load(file)
    except OSError as e:
        raise IoError(f"Cannot read documents {path}: {e}") from e
    except ValueError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(documents, dict) or not all(
            isinstance(value, str) for value in documents.values()):
        raise DataError(f"{path}: expected an object of id -> document text")
    return documents
