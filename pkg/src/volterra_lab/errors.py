"""Exception hierarchy shared by all volterra_lab modules."""


class VolterraError(Exception):
    """Base class for all library errors."""


class DomainError(VolterraError):
    """A point lies outside the triangle 0 <= s <= t <= T."""


class SingularityError(VolterraError):
    """Evaluation on the diagonal of a kernel that is singular there."""


class QuadratureError(VolterraError):
    """Adaptive quadrature failed to reach tolerance within budget."""


class DivergentIntegral(VolterraError):
    """The requested kernel norm does not exist (alpha * q >= 1)."""


class GridTooCoarse(VolterraError):
    """Too few dyadic gap scales are represented for a scaling estimate."""


class MissingDerivative(VolterraError):
    """A check needs the kernel's first-argument derivative, none declared."""


class GrowthViolation(VolterraError):
    """A coefficient exceeded its declared linear growth bound."""


class NonFiniteState(VolterraError):
    """Too many simulated paths overflowed or produced NaNs."""


class GridMismatch(VolterraError):
    """Two path collections do not share the same time grid."""


class SeedMismatch(VolterraError):
    """Coupled ensembles were generated from different seeds."""


class InsufficientPaths(VolterraError):
    """An ensemble is too small for the requested statistical test."""


class NotConvolution(VolterraError):
    """An operation requires convolution-form kernels."""


class ConfigError(VolterraError):
    """A run configuration is invalid; the message names the offending key."""


class ArchiveCorrupt(VolterraError):
    """A run archive cannot be read back."""


class ReplayMismatch(VolterraError):
    """A replayed run produced different statistics than the archive."""
