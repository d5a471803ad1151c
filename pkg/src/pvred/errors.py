"""Exception types shared across the package."""


class PvredError(Exception):
    pass


class InvalidInputError(PvredError, ValueError):
    pass


class ShapeError(PvredError, ValueError):
    pass


class TrainingDivergenceError(PvredError, FloatingPointError):
    """A loss or gradient became non-finite during training."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ModelStateError(PvredError, RuntimeError):
    pass


class ParseError(PvredError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientLengthError(PvredError, ValueError):
    pass
