"""Exception hierarchy shared by every stage of the pipeline."""


class FraudFusionError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 1


class SchemaError(FraudFusionError):
    """Columns missing, duplicated, or fingerprints that do not match."""

    exit_code = 2


class DataError(FraudFusionError):
    """Malformed values in an input file or matrix."""


class ConfigError(FraudFusionError):
    """Invalid configuration, parameters, or scenario selection."""

    exit_code = 2


class TrainingError(FraudFusionError):
    pass


class MetricError(FraudFusionError):
    pass


class ModelIntegrityError(FraudFusionError):
    """A stored model violates a structural invariant (e.g. zero cover)."""
