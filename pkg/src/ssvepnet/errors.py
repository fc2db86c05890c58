"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Input arrays do not match the shapes a layer or model expects."""


class InvalidStateError(RuntimeError):
    """An object is used in a state that does not allow the operation."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, loss):
        super().__init__(f"loss diverged to {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class NumericalError(ArithmeticError):
    """A linear-algebra step failed (singular matrix and the like)."""
