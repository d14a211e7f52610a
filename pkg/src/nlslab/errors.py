"""Exception hierarchy shared by all nlslab modules."""


class NLSLabError(Exception):
    """Base class for every error raised by nlslab."""


class InadmissibleExponentError(NLSLabError, ValueError):
    """An exponent combination violates an integrability condition."""


class RegimeError(NLSLabError, ValueError):
    """The (n, rho) regime does not support the requested operation."""


class GridConfigurationError(NLSLabError, ValueError):
    """A datum cannot be sampled on the given grid."""


class LorentzIndexError(NLSLabError, ValueError):
    """Invalid Lorentz index (p, q)."""


class SingularKernelError(NLSLabError, ValueError):
    """The free Schrodinger kernel is singular at t = 0."""


class MeshError(NLSLabError, ValueError):
    """A requested time is not a node of the time mesh."""


class HypothesisError(NLSLabError, ValueError):
    """A hypothesis of the fixed-point or stability argument is violated."""


class InvalidWindowError(NLSLabError, RuntimeError):
    """The wave packet reached the periodic boundary of the grid."""


class NonConvergenceError(NLSLabError, RuntimeError):
    """Picard iteration did not reach the tolerance.

    The partially filled convergence report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(NLSLabError, ValueError):
    """Experiment configuration failed to parse or validate."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
