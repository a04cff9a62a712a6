"""Exception types shared across the package."""


class TreeTrustError(Exception):
    """Base class for all treetrust errors."""


class InvalidSpecError(TreeTrustError):
    """A data spec, hyperparameter set, or argument violates its contract."""


class IngestionError(TreeTrustError):
    """A CSV file could not be ingested (missing, empty, or malformed)."""


class FitError(TreeTrustError):
    """Model training could not proceed (degenerate data, shape mismatch)."""


class ExplainError(TreeTrustError):
    """An explanation could not be computed from the given model."""


class UndefinedMetricError(TreeTrustError):
    """A metric is mathematically undefined for the given inputs."""


class ModelIOError(TreeTrustError):
    """A serialized model file is malformed or inconsistent."""


class ConfigError(TreeTrustError):
    """A run configuration file or flag set is invalid."""
