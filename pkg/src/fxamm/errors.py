"""Exception hierarchy shared by the pool, arbitrage and simulation code."""


class FxAmmError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FxAmmError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class InsufficientLiquidityError(FxAmmError):
    """A trade would redeem the whole (or more than the whole) outgoing balance."""


class InconsistencyError(FxAmmError):
    """A state update would leave the pool with a nonpositive balance."""


class ConvergenceError(FxAmmError):
    """Newton iteration did not reach the requested step tolerance."""


class ParseError(FxAmmError):
    """Malformed bar file row."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(ParseError):
    """Bar timestamps are duplicated or not strictly increasing."""


class DegenerateSessionError(FxAmmError):
    """A session carries no volume, so it cannot be normalized."""


class RankDeficiencyError(FxAmmError):
    """Regression design matrix does not have full column rank."""
