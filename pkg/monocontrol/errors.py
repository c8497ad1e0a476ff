"""Exception hierarchy shared by every module."""


class MonoControlError(Exception):
    """Base class for all library errors"""


class ShapeError(MonoControlError, ValueError):
    """Grid or vector shapes do not match"""


class NumericError(MonoControlError, ArithmeticError):
    """A gradient or increment factor came out non-finite"""


class PropagationError(MonoControlError):
    """A time step of the forward or adjoint solve failed."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"step {step}: {reason}")
        self.step = step
        self.reason = reason


class ProblemConstructionError(MonoControlError):
    """Invalid parameters or a failed setup computation"""


class ThetaTooSmall(MonoControlError):
    """The Picard map did not contract for the current theta."""

    def __init__(self, theta: float, where: str = ""):
        msg = f"no contraction at theta={theta:.3e}"
        super().__init__(f"{msg} ({where})" if where else msg)
        self.theta = theta


class ThetaOverflow(MonoControlError):
    """Theta grew past the configured ceiling."""

    def __init__(self, theta: float):
        super().__init__(f"theta overflow at theta={theta:.3e}")
        self.theta = theta


class BracketingError(MonoControlError):
    """Line-search bracket is invalid or could not be found"""


class LineSearchStalled(BracketingError):
    """No decrease above round-off is left along the search direction."""

    def __init__(self, step: float, predicted: float):
        super().__init__(f"predicted decrease {predicted:.3e} at step {step:.3e} is below noise")
        self.step = step
        self.predicted = predicted


class ConfigError(MonoControlError):
    """Run configuration is unreadable or invalid"""
