"""Exception types shared across the package."""


class ShapedRecError(Exception):
    """Base class for package errors."""


class ConfigurationError(ShapedRecError, ValueError):
    """Invalid configuration value or tensor shape."""


class DataError(ShapedRecError, ValueError):
    """Malformed or out-of-range input data."""


class TrainingError(ShapedRecError, RuntimeError):
    """Numerical failure during optimization."""


class EvaluationError(ShapedRecError, ValueError):
    """Metric cannot be computed from the given data."""


class HiddenGroundTruthError(ShapedRecError, PermissionError):
    """Evaluation-only fields were requested from a training-mode reader."""
