"""Exception hierarchy shared by the library and the CLI."""


class EtdLabError(Exception):
    """Base class for all library errors."""


class InvalidModel(EtdLabError, ValueError):
    """An MDP, policy or feature matrix violates its structural invariants."""


class NonIrreducibleChain(EtdLabError):
    """The chain has more than one stationary distribution."""


class UndefinedRatio(EtdLabError):
    """The behavior policy gives zero probability to an action the target takes."""


class SingularSystem(EtdLabError):
    """A linear system is (numerically) singular, e.g. a blown-up TD fixed point."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class RankDeficientFeatures(EtdLabError):
    """The feature matrix does not have full column rank."""


class NumericalDivergence(EtdLabError):
    """A stochastic learner's weights left the representable range."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ConfigError(EtdLabError):
    """Malformed experiment or model configuration."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
