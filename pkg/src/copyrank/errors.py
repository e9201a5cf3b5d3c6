"""Exception hierarchy shared across the pipeline."""


class CopyrankError(Exception):
    """Base class for all library errors."""


class ParseError(CopyrankError):
    """Input file violates its declared schema (carries location info in the message)."""


class ValidationError(CopyrankError):
    """Structurally valid input violates a domain invariant."""


class UndefinedCtrError(CopyrankError):
    """CTR requested for an arm with zero impressions."""


class DimensionMismatchError(CopyrankError):
    """Vector/matrix dimensions are incompatible."""


class DegenerateDataError(CopyrankError):
    """Input has no usable variation (zero variance, rank deficiency)."""


class MissingEmbeddingError(CopyrankError):
    """File-backed provider has no vector for a requested text."""


class TransportError(CopyrankError):
    """Remote provider/chat endpoint failed after bounded retries."""


class ConvergenceError(CopyrankError):
    """Iterative solver exhausted its sweep budget above tolerance."""


class UndefinedCorrelationError(CopyrankError):
    """Spearman correlation undefined (zero variance in a rank vector)."""


class BundleFormatError(CopyrankError):
    """Persisted model bundle is unreadable, corrupted, or from an unknown version."""
