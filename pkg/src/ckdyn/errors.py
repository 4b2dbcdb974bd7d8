"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`DomainError`,
which the CLI maps to exit code 1.
"""


class DomainError(Exception):
    """Base class for recoverable, input- or model-related failures."""


class ConfigError(DomainError, ValueError):
    pass


class OrderTooLargeError(DomainError, ValueError):
    """Exact symmetric disorder requested for an interaction order p >= 4."""


class BlowUpError(DomainError, RuntimeError):
    """The radius K_N(t) = |x_t|^2 / N left the admissible range."""

    def __init__(self, time, value, threshold):
        self.time = time
        self.value = value
        self.threshold = threshold
        super().__init__(
            f"K_N = {value:.6g} exceeded blow-up threshold {threshold:.6g} at t = {time:.6g}"
        )


class ConvergenceError(DomainError, RuntimeError):
    """Corrector sweeps of the two-time solver did not converge."""

    def __init__(self, row, residual, iterations):
        self.row = row
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"corrector did not converge on row {row}: residual {residual:.3e} "
            f"after {iterations} sweeps"
        )


class GridMismatchError(DomainError, ValueError):
    pass
