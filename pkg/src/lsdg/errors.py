"""Exception hierarchy.

Input-validation failures also subclass ``ValueError`` so callers that only
care about "bad arguments" can catch the builtin.
"""


class GameError(Exception):
    """Base class for every error raised by this package."""


class SingularMatrix(GameError, ValueError):
    pass


class NonPositiveDiagonal(GameError, ValueError):
    pass


class Overflow(GameError, ArithmeticError):
    """Exponent of a Cole-Hopf transform exceeds the configured magnitude."""


class NonPositiveDesirability(GameError, ValueError):
    pass


class NonFiniteState(GameError, ArithmeticError):
    pass


class NonFiniteControl(GameError, ArithmeticError):
    pass


class DegenerateWeights(GameError, ArithmeticError):
    """Effective sample size fell below the configured floor."""

    def __init__(self, ess, floor, context=""):
        self.ess = float(ess)
        self.floor = float(floor)
        msg = f"effective sample size {self.ess:.3g} below floor {self.floor:.3g}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class HorizonExhausted(GameError, ValueError):
    pass


class OffGridTime(GameError, ValueError):
    """Start time does not sit on the integration grid of the game."""


class BandwidthNonPositive(GameError, ValueError):
    pass


class MissingControls(GameError, ValueError):
    pass


class PlayerCountMismatch(GameError, ValueError):
    pass


class DomainTooNarrow(GameError, ArithmeticError):
    pass


class InstabilityDetected(GameError, ArithmeticError):
    pass


class GridMismatch(GameError, ValueError):
    pass


class ConfigError(GameError, ValueError):
    """Schema or semantic validation failure; ``problems`` lists every offending path."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
