from typing import Optional


class DelayFrontError(Exception):
    pass


class DomainError(DelayFrontError):
    """
    invalid arguments or violated preconditions of the mathematical problem; reported with exit code 1.
    """
    pass


class DivergenceError(DomainError):
    pass


class PreconditionError(DomainError):
    pass


class ConfigError(DomainError):
    pass


class NumericError(DelayFrontError):
    """
    a numerical procedure failed (bracketing, refinement, closure rates); reported with exit code 2.
    """
    pass


class ConstructionError(NumericError):
    """
    an upper or lower solution could not be built with the given parameters.
    t and margin locate the worst violation so the caller can shrink parameters and retry.
    """
    def __init__(self, message: str, t: Optional[float] = None, margin: Optional[float] = None) -> None:
        self.t = t
        self.margin = margin
        if t is not None:
            message = f"{message} (t = {t:.6g}, margin = {margin:.3e})"
        super().__init__(message)


class OrderingViolationError(NumericError):
    def __init__(self, message: str, iteration: int) -> None:
        self.iteration = iteration
        super().__init__(f"{message} at iteration {iteration}")


class InvalidProbeDependencyError(DelayFrontError):
    pass


EXIT_SUCCESS = 0
EXIT_DOMAIN = 1
EXIT_NUMERIC = 2
EXIT_USAGE = 64


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, (NumericError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ValueError, InvalidProbeDependencyError)):
        return EXIT_DOMAIN
    return EXIT_NUMERIC
