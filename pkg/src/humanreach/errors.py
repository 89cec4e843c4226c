"""Exception types shared across the package."""


class HumanReachError(Exception):
    """Base class for all errors raised by humanreach."""


class ConfigError(HumanReachError, ValueError):
    """A configuration document is malformed or has a missing/mistyped field.

    ``source`` and ``line`` are filled in when known so that the CLI can point
    at the offending place in the file.
    """

    def __init__(self, message, source=None, line=None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(self._format())

    def _format(self):
        where = ""
        if self.source is not None:
            where = str(self.source)
            if self.line is not None:
                where += f":{self.line}"
            where += ": "
        elif self.line is not None:
            where = f"line {self.line}: "
        return where + self.message


class ValidationError(ConfigError):
    """A parsed value violates a physical invariant (negative mass, ...)."""

    def __init__(self, message, link=None, source=None, line=None):
        self.link = link
        if link is not None:
            message = f"link {link}: {message}"
        super().__init__(message, source=source, line=line)


class DimensionError(HumanReachError, ValueError):
    """Vector or matrix has the wrong length for the chain it is used with."""


class SingularConfigurationError(HumanReachError, ArithmeticError):
    """The inertia matrix could not be factorized at this configuration."""

    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class NumericalFailure(HumanReachError, ArithmeticError):
    """Simulation state became non-finite."""

    def __init__(self, message, time=None, state=None):
        self.time = time
        self.state = state
        super().__init__(message)


class DegenerateMotionError(HumanReachError, ValueError):
    """Trace has no measurable motion (zero chord or zero speed)."""
