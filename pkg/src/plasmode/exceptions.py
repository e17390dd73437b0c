"""Exception hierarchy shared by every module of the package."""


class PlasmodeError(Exception):
    """Base class for all errors raised by plasmode."""


class DegenerateInputError(PlasmodeError, ValueError):
    """Input too small or too uniform for the requested quantity."""


class SpecificationError(PlasmodeError, ValueError):
    """A model term references a missing attribute or an unknown level."""


class SamplerFault(PlasmodeError, RuntimeError):
    """The Markov chain hit a non-finite acceptance ratio."""


class FitError(PlasmodeError, RuntimeError):
    """A working-model or ERGM fit failed."""


class SeparationError(FitError):
    """Coefficients diverge because the response is perfectly separated."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class RankDeficiencyError(FitError):
    """The design matrix does not have full column rank."""


class ConvergenceError(FitError):
    """Iterative fit did not converge within the iteration budget."""


class InfeasibleCorrelationError(PlasmodeError, ValueError):
    """Target correlation lies outside the attainable range for the marginals."""

    def __init__(self, message, pair=None, attainable=None):
        super().__init__(message)
        self.pair = pair
        self.attainable = attainable


class WeightExplosionError(PlasmodeError, RuntimeError):
    """Estimated propensity is numerically 0 or 1."""


class DegenerateEstimateError(PlasmodeError, RuntimeError):
    """No unit carries weight for the requested exposure arm."""


class StudyError(PlasmodeError, RuntimeError):
    """Too many replicates of a study failed."""
