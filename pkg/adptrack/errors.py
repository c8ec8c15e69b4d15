"""
Error taxonomy for adptrack.

Library code raises these; only adptrack.cli.dispatch turns them into
process exit codes.
"""


class AdpTrackError(Exception):
    """Base class for every error raised by adptrack."""


class ConfigError(AdpTrackError, ValueError):
    """A configuration value is missing, malformed or out of range."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.message = message
        self.line = line
        where = path or "<root>"
        if line is not None:
            where = f"{where} (line {line})"
        super().__init__(f"{where}: {message}")


class RankDeficient(AdpTrackError, ValueError):
    """g(x) lost full column rank at an evaluated point."""

    def __init__(self, sigma_min: float, tolerance: float):
        self.sigma_min = float(sigma_min)
        self.tolerance = tolerance
        super().__init__(
            f"control effectiveness is rank deficient: "
            f"sigma_min={self.sigma_min:.3e} <= {tolerance:.1e}")


class BufferNotReady(AdpTrackError, RuntimeError):
    """The derivative buffer does not yet hold a full window."""


class NonuniformSpacing(AdpTrackError, ValueError):
    """Derivative buffer timestamps are off the uniform grid."""


class NoConvergence(AdpTrackError, RuntimeError):
    """An iterative solve stopped before meeting its tolerance."""


class BasisMismatch(AdpTrackError, ValueError):
    """A basis is not compatible with the requested weight mapping."""


class NumericalDivergence(AdpTrackError, RuntimeError):
    """The closed loop produced a non-finite or runaway state."""

    def __init__(self, message: str, t: float | None = None):
        self.t = t
        super().__init__(message if t is None else f"{message} at t={t:.6g}")


class EmptyTrace(AdpTrackError, ValueError):
    """Metrics were requested for a trace without rows."""
