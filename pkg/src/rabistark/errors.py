"""Exception hierarchy shared across the package.

Numeric failures derive from :class:`NumericError` so the CLI can map them to
a single exit code; configuration problems derive from :class:`ConfigError`.
"""


class RabiStarkError(Exception):
    """Base class for all package errors."""


class NumericError(RabiStarkError):
    """A computation could not be carried out to the requested accuracy."""


class InvalidPointError(NumericError, ValueError):
    """Phase point outside the Bloch domain q1^2 + p1^2 < 2."""


class SingularityError(NumericError):
    """Point (or trajectory) too close to the Bloch boundary q1^2 + p1^2 = 2."""

    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


class StiffnessError(NumericError):
    """Adaptive step size underflowed."""

    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


class EnergyDriftError(NumericError):
    """Classical energy drifted beyond the configured budget."""


class DegenerateSectionError(NumericError):
    """The section lift denominator omega0 + U(q1^2 + p1^2 - 1) vanishes."""


class TruncationTooSmallError(NumericError):
    """The Fock cutoff loses more than the allowed norm of a coherent state."""

    def __init__(self, msg, deficit=None):
        super().__init__(msg)
        self.deficit = deficit


class CapExceededError(NumericError):
    """Truncation search did not converge below the hard cap."""


class ConfigError(RabiStarkError, ValueError):
    """Invalid or malformed run configuration."""
