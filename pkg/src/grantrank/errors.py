"""Exception types shared across the pipeline."""


class GrantRankError(Exception):
    """Base class for every error raised by this package."""


class EmptyCorpusError(GrantRankError):
    """Ingestion or filtering left no usable records."""


class EmbeddingFormatError(GrantRankError):
    """Word-vector file is malformed or dimensionally inconsistent."""


class InsufficientCandidatesError(GrantRankError):
    """Candidate pool too small to build a 5-grant ranking list."""


class DatasetSplitError(GrantRankError):
    """Train/validation split cannot be produced."""


class TrainingError(GrantRankError):
    """Ranker training cannot proceed."""


class EvaluationError(GrantRankError):
    """Metric inputs are inconsistent."""


class ModelFormatError(GrantRankError):
    """Model file is missing, truncated, or has an unknown version."""


class SchemaError(GrantRankError):
    """Feature schema does not match what the model expects."""
