# Copyright (c) 2025, paired-resolution authors.


class ResolutionError(ValueError):
    """Base class for every error raised by paired_resolution."""


class ConfigError(ResolutionError):
    pass


class DataValidationError(ResolutionError):
    """Malformed or out-of-domain input.

    `row` and `column` locate the offending cell when the error comes from a file.
    """

    def __init__(self, message, row=None, column=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateError(ResolutionError):
    """Numerically degenerate input, e.g. zero variance or no discordant pairs.

    `kind` is a short machine-readable tag: "zero_variance", "no_discordant",
    "constant_difference", "unbounded_constant", "too_few_clusters".
    """

    def __init__(self, message, kind):
        super().__init__(message)
        self.kind = kind
