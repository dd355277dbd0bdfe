"""Exception hierarchy shared by all stableheat modules.

Three top-level classes map onto the CLI exit-code discipline:
validation problems (bad parameters, violated hypotheses, malformed
configs), numerical problems (accuracy, non-contraction, blow-up), and
experiment failures (a check ran cleanly but its target was missed).
"""


class StableHeatError(Exception):
    """Base class for all package errors."""


class ParameterError(StableHeatError, ValueError):
    """Input outside the documented parameter domain."""


class ConfigError(ParameterError):
    """Malformed or inconsistent run configuration."""


class DivergenceError(ParameterError):
    """A closed-form integral is infinite for the requested exponent."""


class UnobservableEventError(ParameterError):
    """The requested event cannot be decided from the sampled jumps."""


class HypothesisError(ParameterError):
    """A coefficient audit failed; carries a reproducible witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NumericalError(StableHeatError):
    """Numerical procedure failed to meet its accuracy contract."""


class AccuracyError(NumericalError):
    """Requested tolerance is not certifiable at the current settings."""


class DeltaSingularityError(NumericalError):
    """Pointwise kernel evaluation requested at the delta singularity."""


class NonContractionError(NumericalError):
    """Fixed-point iteration failed to contract on a time window."""

    def __init__(self, message, window=None, ratio=None):
        super().__init__(message)
        self.window = window
        self.ratio = ratio


class BlowUpError(NumericalError):
    """Non-finite values appeared in a solution path."""

    def __init__(self, message, path_seed=None):
        super().__init__(message)
        self.path_seed = path_seed


class ExperimentFailure(StableHeatError):
    """An experiment ran to completion but did not meet its target."""
