"""Exception types shared across the package.

Every error carries the name of the subsystem that raised it so the CLI and
the HTTP service can attribute failures without parsing messages.
"""


class CascadeKitError(Exception):
    """Base class for all domain errors."""

    module = "cascadekit"

    def __str__(self) -> str:
        return f"{self.module}: {super().__str__()}"


class SchemaError(CascadeKitError):
    """A logits dump violates the JSONL schema.

    line_number is 1-based and refers to the offending line when known.
    """

    module = "datamodel"

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class AlignmentError(CascadeKitError):
    module = "datamodel"


class CalibrationError(CascadeKitError):
    module = "calibration"


class RoutingError(CascadeKitError):
    module = "cascade"


class SolverError(CascadeKitError):
    module = "thresholds"


class MetricsError(CascadeKitError):
    module = "metrics"


class TrainingError(CascadeKitError):
    module = "toytrain"


class ConfigError(CascadeKitError):
    module = "cli"
