"""Exception hierarchy shared by every module."""


class AdaptActError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(AdaptActError, ValueError):
    pass


class ArgumentError(AdaptActError, ValueError):
    pass


class NumericError(AdaptActError, FloatingPointError):
    pass


class ContractError(AdaptActError, RuntimeError):
    pass


class SpecError(AdaptActError, ValueError):
    pass


class ScheduleError(AdaptActError, ValueError):
    pass


class FormatError(AdaptActError, ValueError):
    pass


class TrainingError(AdaptActError, RuntimeError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ConfigError(AdaptActError, ValueError):
    """Raised with every problem found in a config, not just the first."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ComparisonError(AdaptActError, ValueError):
    pass
