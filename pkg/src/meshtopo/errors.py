"""Exception types shared across the package.

Every failure the library raises on purpose derives from MeshTopoError so
callers (and the CLI) can separate bad input from genuine bugs.
"""


class MeshTopoError(Exception):
    """Base class for all errors raised deliberately by this package."""


class ParseError(MeshTopoError):
    """A text input (OBJ, XYZ, JSONL) could not be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        if prefix:
            message = f"{prefix}: {message}"
        super().__init__(message)


class UnsupportedFaceError(ParseError):
    """A face record has fewer than 3 or more than 4 vertices."""


class IndexRangeError(ParseError):
    """A face references a vertex index outside the vertex table."""


class DomainError(MeshTopoError):
    """An argument is outside its documented domain (bad level count, bad tau, ...)."""


class DegenerateGeometryError(MeshTopoError):
    """Geometry has no usable extent or area where some is required."""


class PreconditionError(MeshTopoError):
    """An operation was handed input that violates its stated precondition."""


class DecodeError(MeshTopoError):
    """A token stream cannot be decoded. Carries the offending token index."""

    def __init__(self, message, token_index=None):
        self.token_index = token_index
        if token_index is not None:
            message = f"token {token_index}: {message}"
        super().__init__(message)


class ConsistencyError(MeshTopoError):
    """Two inputs that must describe the same object disagree."""


class FramingError(MeshTopoError):
    """A serialized record violates its framing (token outside vocabulary, ...)."""


class MaskEmptyError(MeshTopoError):
    """A mask (or its complement) selected no tokens, so a ratio is undefined."""


class TopologyError(MeshTopoError):
    """A mesh does not have the topology an operation requires (e.g. not a disk)."""


class NoPathError(MeshTopoError):
    """Two vertices lie in different connected components of the edge graph."""


class InvalidPathError(MeshTopoError):
    """A cut path references an edge that does not exist in the mesh."""


class MetricError(MeshTopoError):
    """A quality metric could not be computed. Carries the metric name."""

    def __init__(self, message, metric=None):
        self.metric = metric
        if metric is not None:
            message = f"{metric}: {message}"
        super().__init__(message)


class NumericError(MeshTopoError):
    """A numeric computation produced non-finite values or a singular system.

    ``where`` names the parameter segment or pipeline stage that failed.
    """

    def __init__(self, message, where=None):
        self.where = where
        if where is not None:
            message = f"{where}: {message}"
        super().__init__(message)


class DegenerateFaceWarning(UserWarning):
    """A face collapsed to fewer than 3 distinct vertices and was dropped."""
