"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ExtremalLabError(Exception):
    exit_code = 4


class InputError(ExtremalLabError, ValueError):
    """Malformed or inconsistent user input."""

    exit_code = 2


class ParseError(InputError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, col {col})"
        super().__init__(message)


class UnboundVariableError(InputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unbound variable '{name}'")


class NumericalError(ExtremalLabError, ArithmeticError):
    """Divergence, blow-up, domain violations and zero-level failures."""

    exit_code = 3


class DomainError(NumericalError):
    pass


class InvariantError(ExtremalLabError, AssertionError):
    """An internal invariant was breached."""

    exit_code = 4
