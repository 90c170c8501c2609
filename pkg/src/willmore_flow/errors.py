"""Exception hierarchy shared by all modules."""


class WillmoreFlowError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WillmoreFlowError, ValueError):
    """Invalid grid, boundary data or run configuration."""


class CompatibilityError(ConfigurationError):
    """Initial datum does not match the clamped boundary data."""


class StateError(WillmoreFlowError):
    """A field is not in the state an operation requires (e.g. missing ghosts)."""


class NumericalError(WillmoreFlowError):
    """Linear-solver breakdown or singular Jacobian."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class BlowUpError(WillmoreFlowError):
    """Non-finite update during time stepping.

    Carries the last finite state and everything recorded up to the failure.
    """

    def __init__(self, message, last_state=None, trajectory=None, diagnostics=None):
        super().__init__(message)
        self.last_state = last_state
        self.trajectory = trajectory
        self.diagnostics = diagnostics


class NonConvergenceError(WillmoreFlowError):
    """Iteration limit or damping floor reached without meeting the tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class UndersampledError(WillmoreFlowError, ValueError):
    """Some window ``[t/2, t]`` holds too few samples for a trajectory estimator."""

    def __init__(self, offending, min_samples=4):
        self.offending = tuple(offending)
        listed = ", ".join(f"{t:.6g}" for t in self.offending)
        super().__init__(f"windows [t/2, t] with fewer than {min_samples} samples at t = {listed}")
