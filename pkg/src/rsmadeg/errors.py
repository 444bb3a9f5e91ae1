"""Exception types raised by the toolkit."""


class ValidationError(ValueError):
    """An input violates a documented constraint."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DimensionError(ValidationError):
    """Array shapes do not agree.  ``operand`` names the offending input."""

    def __init__(self, operand, expected, got):
        super().__init__(
            f"dimension mismatch for {operand!r}: expected {expected}, got {got}",
            field=operand,
        )
        self.operand = operand
        self.expected = expected
        self.got = got


class SpecError(ValidationError):
    """An experiment spec file could not be parsed or validated."""
