"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class FormatError(ValueError):
    """A file could not be parsed. ``offset`` is the byte offset of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateLossError(RuntimeError):
    """The base loss fell below the epsilon guard; ``trace`` holds the rows recorded so far."""

    def __init__(self, message, trace=None, step=None):
        super().__init__(message)
        self.trace = trace
        self.step = step


class UndefinedCorrelationError(ValueError):
    pass


class ConfigError(ValueError):
    """Carries every diagnostic found while validating a config file."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


class ReportError(OSError):
    pass
