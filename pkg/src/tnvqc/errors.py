class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes NaN or infinite."""

    def __init__(self, epoch, value):
        self.epoch = epoch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}")
