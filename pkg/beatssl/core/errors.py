"""
Exception hierarchy for beat-ssl.

Every error raised on purpose by the package derives from BeatSSLError. The
classes also derive from the built-in exception a caller would expect
(ValueError, OSError) so code written against built-ins keeps working.
"""


class BeatSSLError(Exception):
    """Base class for all beat-ssl errors."""


class ConfigurationError(BeatSSLError, ValueError):
    """Invalid parameters, unknown config keys or a non-table ablation row."""


class ValidationError(BeatSSLError, ValueError):
    """An argument failed a precondition check."""


class ShapeError(BeatSSLError, ValueError):
    """Array dimensions do not match the expected contract."""


class IntegrityError(BeatSSLError, ValueError):
    """Stored data contradicts its manifest or another split."""


class LeakageError(IntegrityError):
    """A test record comes from a fold used for pretraining."""


class DatasetIOError(BeatSSLError, OSError):
    """A dataset file is missing or unreadable."""


class NoBeatsError(BeatSSLError, ValueError):
    """No heartbeat could be found in a signal."""


class InsufficientBeatsError(BeatSSLError, ValueError):
    """Fewer beats than an operation needs."""


class DegenerateFeatureError(BeatSSLError, ValueError):
    """A feature vector has zero norm, so cosine similarity is undefined."""


class DegenerateEmbeddingError(BeatSSLError, ValueError):
    """A projection row has zero norm, so cosine similarity is undefined."""


class InsufficientPairsError(BeatSSLError, ValueError):
    """A paired test has too few non-zero differences."""
