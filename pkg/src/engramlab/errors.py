"""Exception hierarchy shared by every module."""


class EngramLabError(Exception):
    """Base class for all errors raised by engramlab."""


class InputError(EngramLabError, ValueError):
    """Arguments violate an operation's preconditions."""


class ConfigError(EngramLabError, ValueError):
    """Invalid configuration. ``field`` names the offending key path."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class SingularityError(EngramLabError, ZeroDivisionError):
    pass


class DivergenceError(EngramLabError, ArithmeticError):
    """Numerical integration left the finite range."""

    def __init__(self, message, step):
        self.step = step
        super().__init__(f"{message} (step {step})")


class TrainingError(EngramLabError, ArithmeticError):
    def __init__(self, message, epoch):
        self.epoch = epoch
        super().__init__(f"{message} (epoch {epoch})")


class EmptyActivationError(EngramLabError, LookupError):
    """No SDM hard location lies within the activation radius of an address."""

    def __init__(self, address):
        self.address = address
        super().__init__("no hard location within radius of address "
                         + "".join(str(int(b)) for b in address))


class InstabilityError(EngramLabError, RuntimeError):
    def __init__(self, message, config=None):
        self.config = config
        super().__init__(message)


class UsageError(EngramLabError):
    """Unknown experiment or malformed command line."""
