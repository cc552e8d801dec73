"""Exception hierarchy for g2kit.

Three failure families map onto the CLI exit codes:

* configuration / usage problems         -> exit code 1
* malformed or inconsistent input data   -> exit code 2
* statistically degenerate inputs        -> exit code 3
"""


class G2KitError(Exception):
    """Base class for all g2kit errors."""

    exit_code = 2


class ConfigurationError(G2KitError):
    """Invalid configuration value, option combination or file."""

    exit_code = 1


class IncompleteSummaryError(ConfigurationError):
    """A count summary is missing fields the selected protocol requires."""


class DataError(G2KitError):
    """Base class for malformed or inconsistent input data."""

    exit_code = 2


class FormatError(DataError):
    """Structurally malformed stream or document.

    ``byte_offset`` (or ``line_number`` for text inputs) locates the problem.
    """

    def __init__(self, message, byte_offset=None, line_number=None):
        loc = []
        if byte_offset is not None:
            loc.append(f"byte offset {byte_offset}")
        if line_number is not None:
            loc.append(f"line {line_number}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.byte_offset = byte_offset
        self.line_number = line_number


class OrderingError(DataError):
    """Timestamps out of order; ``record_index`` names the offending record."""

    def __init__(self, message, record_index=None):
        if record_index is not None:
            message = f"{message} (record index {record_index})"
        super().__init__(message)
        self.record_index = record_index


class SchemaError(DataError):
    """Record content violates the channel schema or lattice constraints."""


class EmptyTriggerError(DataError):
    """No trigger records found where at least one is required."""


class BoundsError(DataError):
    """A region or interval falls outside the histogram window."""


class RegionLayoutError(DataError):
    """Detection regions overlap, misalign or do not fit the window."""


class NoPeakError(DataError):
    """Automatic region detection found no photon peak.

    Raised with guidance to supply manual regions instead.
    """


class DegenerateStatisticsError(G2KitError):
    """Statistics too degenerate to propagate (zero variance, no sets, ...)."""

    exit_code = 3


class DegenerateInputError(DegenerateStatisticsError):
    """A denominator count or probability is zero where it must not be."""


class UndefinedAlphaError(DegenerateStatisticsError):
    """The multi-photon ratio is undefined (zero photon probability)."""
