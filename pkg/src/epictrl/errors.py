"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration and parsing problems exit
with 2, numerical failures with 3.
"""


class EpictrlError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EpictrlError):
    """Invalid scenario configuration (schema violation, bad value, bad path)."""


class DataParseError(EpictrlError):
    """Malformed observation file (missing column, date gap, bad value)."""


class ScenarioError(ConfigError):
    """A physically unreachable or ill-posed scenario (e.g. target temperature
    unreachable before arrival)."""


class NumericalError(EpictrlError):
    """A numerical computation failed (non-finite state, divergence)."""
