"""Exception types shared across the toolkit.

Numerical failures (divergence, Zeno suspicion, root bracketing, window
exhaustion, quadrature accuracy) are kept distinct from input-validation
errors so the CLI can map them to different exit codes.
"""


class EtcError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EtcError, ValueError):
    """Malformed or inconsistent inputs (shape, symmetry, sign, schema)."""


class DimensionError(ValidationError):
    """Array dimensions do not match the operation's contract."""


class InfeasibilityError(EtcError):
    """A certificate or constant cannot exist for the given data."""


class BracketError(EtcError):
    """Root bracketing failed: no sign change on the given interval."""


class WindowExhaustedError(EtcError):
    """A scan window was exhausted without finding the sought crossing."""

    def __init__(self, msg, scan_taus=None, scan_values=None):
        super().__init__(msg)
        self.scan_taus = scan_taus
        self.scan_values = scan_values


class AccuracyError(EtcError):
    """Requested tolerance was not met; carries the best estimate found."""

    def __init__(self, msg, best_estimate=None):
        super().__init__(msg)
        self.best_estimate = best_estimate


class DivergenceError(EtcError):
    """Simulated state exceeded the overflow guard."""


class ZenoSuspectedError(EtcError):
    """Event count exceeded the guard; carries the tail of inter-event times."""

    def __init__(self, msg, dt_tail=None):
        super().__init__(msg)
        self.dt_tail = list(dt_tail) if dt_tail is not None else []


class ConfigError(EtcError):
    """CLI/run configuration is invalid."""
