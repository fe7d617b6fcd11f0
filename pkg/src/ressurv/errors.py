"""Exception types shared across the package.

The CLI maps these onto stable exit codes: configuration / input problems
(schema, bad rows, unusable datasets) exit with 2, numerical divergence
during training exits with 3.
"""


class RessurvError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(RessurvError):
    """A file (CSV header, hyperparameter file, grid file) does not match
    the documented schema."""


class DataRowError(RessurvError):
    """A CSV data row failed to parse. Carries the 1-based data row index."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class UnusableDatasetError(RessurvError):
    """A dataset cannot support training (no events, or no features left)."""


class StratificationError(RessurvError):
    """A fold layout would leave some training complement without events."""


class UndefinedMetricError(RessurvError):
    """The concordance index is undefined (no comparable pairs)."""


class DivergenceError(RessurvError):
    """Training produced a non-finite loss. Carries the offending epoch."""

    def __init__(self, epoch: int, message: str = ""):
        detail = f" ({message})" if message else ""
        super().__init__(
            f"non-finite loss at epoch {epoch}{detail}; "
            "the learning rate is likely too high"
        )
        self.epoch = epoch
