"""Exception types shared across the package."""


class IntegrationError(RuntimeError):
    """Base class for failures inside the adaptive integrator."""


class StepUnderflow(IntegrationError):
    """Step size fell below the machine-epsilon-scaled floor.

    Signals stiffness beyond what the explicit solver is configured for
    (the supported mass range is epsilon >= 1e-4).
    """


class MaxStepsExceeded(IntegrationError):
    """The step budget ran out before reaching the requested horizon."""


class NonFiniteState(IntegrationError):
    """NaN or Inf appeared in the state or its derivative."""


class OutOfRange(ValueError):
    """A time query fell outside the span covered by a trajectory."""


class SpanMismatch(ValueError):
    """Two trajectories do not both cover the requested comparison window."""


class EpsilonTooLarge(ValueError):
    """Mass parameter too large for the envelope constants to be real."""


class InvalidLipschitz(ValueError):
    """Lipschitz constant below the max(1, epsilon) convention."""


class UnsupportedObjective(ValueError):
    """Operation is specific to an objective it was not given."""


class BoxViolation(RuntimeError):
    """Trajectory left the box on which a certificate was computed."""


class EmptyWindow(ValueError):
    """A verification window has zero length."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""
