class NumericError(ArithmeticError):
    """A linear-algebra or series computation could not meet its accuracy contract."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
