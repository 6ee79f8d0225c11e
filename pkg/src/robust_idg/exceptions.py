"""Exception types raised by the solvers and models."""


class NonFiniteState(ValueError):
    """A state, control or disturbance entry is NaN or infinite."""


class DivergedRollout(RuntimeError):
    """A rollout produced a non-finite state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"rollout diverged at step {step}")


class FailureAtStep(RuntimeError):
    """The backward pass hit an ill-posed curvature block at step ``t``."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"backward pass failed at step {t}")


class SaddleIllConditioned(FailureAtStep):
    """The coupled stationarity system could not be solved reliably."""


class NoProgress(RuntimeError):
    """The optimizer could not find an acceptable step.

    The best result found so far is kept on ``result`` so callers can
    still inspect the trajectory and report.
    """

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class HorizonMismatch(ValueError):
    """A frozen policy is shorter than the requested horizon."""


class ConcavityViolated(ValueError):
    """The inner maximization of an LQ game is not concave at step ``t``."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"game is not concave in v at step {t}")


class BoundaryHit(RuntimeError):
    """A grid search optimum landed on the search boundary."""


class ConfigError(ValueError):
    """Invalid or unknown configuration entries."""
