"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureError(ArithmeticError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class BatchFormatError(ValueError):
    """An event batch file could not be parsed."""


class NonFiniteScoreError(ArithmeticError):
    """A likelihood term is non-finite, e.g. an impossible event at nu=1."""

    def __init__(self, index: int):
        super().__init__(
            f"event {index} has zero probability under the trial parameters "
            "(score term is non-finite)"
        )
        self.index = index
