"""Exception types shared across the package."""


class UsageError(ValueError):
    """Bad arguments: shape mismatch, out-of-range index, negative input."""


class NumericOverflowError(ArithmeticError):
    """A loss or gradient evaluated to a non-finite value."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, grad_norm):
        super().__init__(f"{message} (achieved gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


class DivergenceError(RuntimeError):
    def __init__(self, step):
        super().__init__(f"non-finite iterate at step {step}")
        self.step = step


class RegimeViolationError(ValueError):
    """A theorem's step-size or constant precondition does not hold."""


class RegimeMisconfigurationError(RuntimeError):
    """Too many replicates diverged for the estimate to be meaningful."""


class DiagnosticUnavailableError(RuntimeError):
    pass
