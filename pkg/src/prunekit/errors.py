"""Exception types shared across the package."""


class PruneKitError(Exception):
    """Base class for errors raised by prunekit."""


class BoundsError(PruneKitError, ValueError):
    """A channel count falls outside its template bounds."""


class StructureError(PruneKitError, ValueError):
    """Malformed template, tensor shape, or matrix."""


class DataFormatError(PruneKitError, ValueError):
    """A dataset file does not match its declared format.

    ``offset`` is the byte offset of the first offending record, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDiverged(PruneKitError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch_index: int, loss_value: float):
        super().__init__(
            f"non-finite loss {loss_value!r} at epoch {epoch}, batch {batch_index}"
        )
        self.epoch = epoch
        self.batch_index = batch_index
