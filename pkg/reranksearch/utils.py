import os
import tempfile

from reranksearch.errors import IoError, UsageError


def chunked(items, size):
    """
    Splits a list into consecutive chunks.

    Args:
        items (list): Items to split.
        size (int): Maximum chunk length.

    Returns:
        list: List of chunks, each a list of at most `size` items.

    ```python
    chunked([1, 2, 3, 4, 5], 2)
    [[1, 2], [3, 4], [5]]
    ```
    """
    if size < 1:
        raise UsageError("Chunk size must be positive")
    items = list(items)
    return [items[i:i + size] for i in range(0, len(items), size)]


def parse_int_list(text):
    """
    Parses a comma separated list of positive integers, e.g. "5,10,15".

    Args:
        text (str): The list as typed on the command line.

    Returns:
        list: The integers, in the order given, without duplicates.

    Raises:
        UsageError: If an element is not a positive integer.
    """
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            value = int(part)
        except ValueError:
            raise UsageError(f"Expected an integer, got {part!r}")
        if value < 1:
            raise UsageError(f"Expected a positive integer, got {value}")
        if value not in values:
            values.append(value)
    if not values:
        raise UsageError("Expected at least one integer")
    return values


def atomic_write_bytes(path, data):
    """
    Writes `data` to `path` through a temporary file in the same directory,
    then renames it over the target.

    Raises:
        IoError: If the directory is not writable.
    """
    directory = os.path.dirname(os.path.abspath(path))
    tmp_path = None
    try:
        fd, tmp_path = tempfile.mkstemp(
            prefix=".tmp-", suffix=os.path.basename(path), dir=directory)
        with os.fdopen(fd, "wb") as file:
            file.write(data)
        os.replace(tmp_path, path)
    except OSError as e:
        if tmp_path is not None and os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise IoError(f"Cannot write {path}: {e}") from e


def elapsed_ms(start, end):
    return (end - start) * 1000.0
