"""Exception types shared across the package."""


class SvebmError(Exception):
    """Base class for all package-specific errors."""

    code = "error"


class ContractViolation(SvebmError, ValueError):
    """An argument broke a documented precondition (shape, finiteness, range)."""

    code = "contract"


class DataError(SvebmError, ValueError):
    """Malformed example, corpus, or dataset file."""

    code = "data"


class ConfigError(SvebmError, ValueError):
    """Invalid or inconsistent configuration."""

    code = "config"


class SamplerDivergence(SvebmError, RuntimeError):
    """Langevin dynamics produced a non-finite or runaway state.

    Carries the offending latent state in ``state`` for diagnostics.
    """

    code = "sampler-divergence"

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class EvaluationError(SvebmError, RuntimeError):
    """An evaluation metric could not be computed (e.g. degenerate weights)."""

    code = "evaluation"


class CheckpointError(SvebmError, ValueError):
    """Unreadable or incompatible checkpoint file."""

    code = "checkpoint"
