"""Exception hierarchy shared by all modules."""


class LevFerroError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LevFerroError, ValueError):
    """Input outside the domain where a model is defined."""


class NoEquilibriumError(LevFerroError):
    """No levitating minimum exists for the magnet/trap combination."""


class NoSolutionError(LevFerroError):
    """A root or inverse problem has no solution in the search box."""


class ConvergenceError(LevFerroError):
    """An iterative solver hit its iteration cap."""


class DegenerateFitError(LevFerroError, ValueError):
    """Data cannot constrain the requested fit parameters."""


class AliasingError(LevFerroError, ValueError):
    """Reference frequency at or above the Nyquist frequency."""


class SingleRegimeError(LevFerroError):
    """Crossing data do not bracket the signal/noise knee."""


class StabilityError(LevFerroError):
    """Time step violates the integrator's stability/resolution bound."""


class MonteCarloFailureError(LevFerroError):
    """Too many Monte-Carlo draws failed."""


class ConfigError(LevFerroError, ValueError):
    """Malformed configuration file; message carries the key path."""
