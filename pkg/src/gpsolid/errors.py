"""Exception hierarchy shared by all gpsolid modules."""


class GPSolidError(Exception):
    """Base class for every error raised by gpsolid."""


class PotentialError(GPSolidError, ValueError):
    """Invalid potential family, parameters or tabulated data."""


class QuadratureError(GPSolidError, RuntimeError):
    """Radial quadrature did not reach its tolerance within the node budget."""


class DivergentMomentError(GPSolidError, ValueError):
    """A moment was requested that is infinite for the declared decay exponent."""


class ScanIncompleteError(GPSolidError, RuntimeError):
    """The wavenumber scan stops before the objective has turned around."""


class StabilityError(GPSolidError, RuntimeError):
    """Minimization refused for a potential whose stability is not established."""


class EnergyBoundViolation(GPSolidError, AssertionError):
    """A computed free energy fell below the superstability lower bound."""


class DegreeUndefinedError(GPSolidError, ValueError):
    """The field vanishes on the circle used for the winding degree."""


class InsufficientDataError(GPSolidError, ValueError):
    """Too few samples for an extrapolation or fit."""


class ConfigError(GPSolidError, ValueError):
    """Malformed run configuration; the message carries the line number."""
