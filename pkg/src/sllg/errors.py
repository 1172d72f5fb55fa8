"""Exception hierarchy shared by all modules."""


class SLLGError(Exception):
    pass


class ConfigError(SLLGError, ValueError):
    """Invalid configuration. ``key`` names the offending setting when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class BlowUpError(SLLGError, FloatingPointError):
    """A step produced a non-finite state."""

    def __init__(self, step, time, paths=()):
        self.step = step
        self.time = time
        self.paths = tuple(paths)
        super().__init__(f"non-finite state at step {step} (t={time:.6g}); paths {list(self.paths)}")


class StepFailureError(SLLGError, RuntimeError):
    """Implicit midpoint fixed-point iteration did not converge."""

    def __init__(self, step, time, paths=(), iterations=0):
        self.step = step
        self.time = time
        self.paths = tuple(paths)
        self.iterations = iterations
        super().__init__(
            f"midpoint iteration did not converge in {iterations} iterations at step {step} "
            f"(t={time:.6g}), paths {list(self.paths)}; reduce dt"
        )


class InsufficientDataError(SLLGError, ValueError):
    pass


class StatisticalPowerError(SLLGError, ValueError):
    pass


class EnsembleFailure(SLLGError, RuntimeError):
    pass
