"""Exception taxonomy shared across the toolkit.

Two families matter for the CLI exit-code mapping: DataError (bad inputs
or artifacts, exit code 2) and EndpointError (remote service failures,
exit code 3). Plain I/O problems are left as OSError.
"""


class SynthkitError(Exception):
    """Base class for all toolkit-specific errors."""


class DataError(SynthkitError):
    """Invalid input data, artifact, or configuration."""


class EndpointError(SynthkitError):
    """A remote completion or embedding endpoint failed."""


# -- corpus / maskgen ---------------------------------------------------------

class MultiRoundRecordError(DataError):
    """Record is not a single user/assistant round."""


class EmptyPromptError(DataError):
    """User content is empty after trimming."""


class SchemaViolationError(DataError):
    """A serialized record does not match the expected schema."""


# -- filters ------------------------------------------------------------------

class FilterConfigError(DataError):
    """Filter configuration violates its invariants."""


# -- genclient / normsim endpoints --------------------------------------------

class EndpointUnreachableError(EndpointError):
    """Endpoint could not be reached after retries."""


class RateLimitedError(EndpointError):
    """Endpoint kept rate-limiting after retries."""


class EndpointRequestError(EndpointError):
    """Endpoint answered, but the request failed after retries."""


# -- normsim ------------------------------------------------------------------

class DimensionMismatchError(DataError):
    """Embedding dimensions disagree."""


class CorruptHeaderError(DataError):
    """Embedding file header is not recognizable."""


class EmptyMatrixError(DataError):
    """Embedding matrix has no rows."""


class EmptyReferenceError(DataError):
    """Reference corpus for scoring has no rows."""


class EmptyScoresError(DataError):
    """Score set is empty."""


# -- mixer --------------------------------------------------------------------

class SourceTooSmallError(DataError):
    """Subset size exceeds the source size."""


class DuplicateIdError(DataError):
    """Record ids collide after source-tag prefixing."""
