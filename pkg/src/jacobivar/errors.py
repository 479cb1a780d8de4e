"""Exception hierarchy shared by every jacobivar module."""


class JacobivarError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(JacobivarError, ValueError):
    """Malformed DSL text.

    ``offset`` is the byte offset of the offending token in the UTF-8
    encoded source.
    """

    def __init__(self, message, offset, expected=None):
        self.offset = offset
        self.expected = expected
        super().__init__(f"{message} at offset {offset}")


class UnknownFunctionError(ParseError):
    pass


class UndeclaredSymbolError(JacobivarError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else ""


class UnboundSymbolError(JacobivarError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else ""


class DomainError(JacobivarError, ArithmeticError):
    """A function was evaluated outside its real domain."""

    def __init__(self, message, subexpression=None):
        self.subexpression = subexpression
        super().__init__(message)


class SymbolTableError(JacobivarError, ValueError):
    pass


class SingularMassError(JacobivarError, ArithmeticError):
    """The velocity Hessian is not invertible at ``state``."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)


class NotAutonomousError(JacobivarError):
    pass


class IntegrationSettingsError(JacobivarError, ValueError):
    pass


class DivergenceError(JacobivarError, ArithmeticError):
    pass


class ConfigError(JacobivarError, ValueError):
    pass
