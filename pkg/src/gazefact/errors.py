"""Exception hierarchy shared by all gazefact modules.

Each class maps to one CLI exit code so batch callers can triage
failures without parsing messages.
"""


class GazefactError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(GazefactError):
    """Malformed or missing input files."""

    exit_code = 2


class ParseError(InputError):
    """A file could not be parsed; the message names the offending line."""

    exit_code = 3


class ConfigError(GazefactError):
    """Inconsistent configuration (layout/screen mismatch, bad CV setup, ...)."""

    exit_code = 4


class NumericalError(GazefactError):
    """Numerical failure: degenerate inputs, rank deficiency, undefined metrics."""

    exit_code = 5


class InputOrderError(InputError):
    """Gaze samples for a session were not strictly increasing in time."""


class DegenerateInputError(NumericalError):
    """Zero-variance or otherwise degenerate numerical input."""


class DesignError(NumericalError):
    """Rank-deficient or otherwise unusable design matrix."""


class UndefinedMetricError(NumericalError):
    """A metric (e.g. AUC) is undefined for the given inputs."""


class PlanError(ConfigError):
    """A synthetic fixation plan is invalid for the given screen geometry."""
