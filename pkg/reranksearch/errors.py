"""
Exception hierarchy for reranksearch.

Every error raised by the package derives from `RerankSearchError`. The three
category bases carry the exit code the command line returns for them.
"""


class RerankSearchError(Exception):
    """Base class for all reranksearch errors."""
    exit_code = 1


class UsageError(RerankSearchError):
    """Invalid arguments supplied by the caller."""
    exit_code = 1


class DataError(RerankSearchError):
    """Problem with a corpus, an index file or a judgment set."""
    exit_code = 2


class ProviderError(RerankSearchError):
    """Failure talking to an embedding or chat-completion provider."""
    exit_code = 3


# ingest

class MissingColumn(DataError, ValueError):
    def __init__(self, column, header):
        super().__init__(
            f"Column {column!r} not found in CSV header {list(header)}")
        self.column = column


class DuplicateId(DataError, ValueError):
    def __init__(self, record_id):
        super().__init__(f"Duplicate record id {record_id!r}")
        self.record_id = record_id


class EmptyCorpus(DataError):
    pass


class MalformedCsv(DataError):
    pass


# embedder

class EmptyText(DataError, ValueError):
    pass


# index

class DimMismatch(DataError, ValueError):
    pass


class EmptyInput(DataError, ValueError):
    pass


class InvalidK(UsageError, ValueError):
    pass


class ZeroNorm(DataError, ValueError):
    pass


class IoError(DataError, OSError):
    """Reading or writing a corpus or index file failed."""


class BadMagic(DataError):
    pass


class VersionUnsupported(DataError):
    pass


class CorruptPayload(DataError):
    pass


# pipeline / eval

class ModelMismatch(DataError):
    def __init__(self, provider_model, index_model):
        super().__init__(
            f"Provider model {provider_model!r} does not match index model "
            f"{index_model!r}")
        self.provider_model = provider_model
        self.index_model = index_model


class UnknownRelevantId(DataError):
    def __init__(self, query_id, record_id):
        super().__init__(
            f"Query {query_id!r} references unknown record id {record_id!r}")
        self.query_id = query_id
        self.record_id = record_id


# providers

class AuthFailed(ProviderError):
    pass


class RateLimited(ProviderError):
    pass


class TransportError(ProviderError):
    pass


class BadResponse(ProviderError):
    pass


class MissingApiKey(ProviderError):
    def __init__(self, env_var):
        super().__init__(
            f"Environment variable {env_var} must be set for remote providers")
        self.env_var = env_var


# reranker

class ParseFailure(RerankSearchError, ValueError):
    """The chat reply is not a JSON array of strings."""
