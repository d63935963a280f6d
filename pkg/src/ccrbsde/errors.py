"""Exception hierarchy shared by all modules."""


class CCRError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(CCRError, ValueError):
    pass


class NonFiniteStateError(CCRError, FloatingPointError):
    """A simulated quantity overflowed or became NaN."""

    def __init__(self, what, path, step):
        self.path = int(path)
        self.step = int(step)
        super().__init__(f"non-finite {what} on path {self.path} at step {self.step}")


class UnsupportedModelError(CCRError):
    pass


class IllConditionedError(CCRError, ArithmeticError):
    """Least-squares system too close to singular.

    ``step`` is filled in by the backward solver when the failure happens
    inside a time step.
    """

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class SingularDiffusionError(CCRError, ArithmeticError):
    def __init__(self, path, step, cond):
        self.path = int(path)
        self.step = int(step)
        self.cond = float(cond)
        super().__init__(
            f"diffusion matrix singular on path {self.path} at step {self.step} "
            f"(condition number {self.cond:.3g})"
        )


class ConvergenceError(CCRError):
    def __init__(self, step, residual, iterations):
        self.step = step
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"implicit fixed point did not converge at step {step}: "
            f"residual {residual:.3g} after {iterations} iterations"
        )


class InvalidModelError(CCRError, ValueError):
    pass


class ContractViolationError(CCRError):
    """An operation was called outside its documented preconditions."""


class NotPSDError(CCRError, ValueError):
    pass


class DegenerateParametersError(CCRError, ValueError):
    pass


class ConfigError(CCRError, ValueError):
    pass
