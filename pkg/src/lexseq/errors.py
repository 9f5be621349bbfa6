"""Exception hierarchy for lexseq.

Every error derives from ``ValueError`` as well as ``LexseqError`` so callers
that only guard against bad input keep working.
"""


class LexseqError(Exception):
    """Base class for all lexseq errors."""


class ShapeError(LexseqError, ValueError):
    """Operand shapes are incompatible."""


class NumericalError(LexseqError, ValueError):
    """A computation produced NaN or infinite values."""


class VocabularyError(LexseqError, ValueError):
    """An id or label is outside the known inventory."""


class ConfigError(LexseqError, ValueError):
    """Configuration could not be read or is inconsistent."""


class SequenceTooLongError(LexseqError, ValueError):
    """A sentence exceeds the configured maximum length."""


class CheckpointError(LexseqError, ValueError):
    """A checkpoint is missing, corrupt or incompatible."""


class DataFormatError(LexseqError, ValueError):
    """An input file is malformed."""

    def __init__(self, message: str, path: str | None = None, line_number: int | None = None):
        """Initialize the error.

        Args:
            message: Description of the problem.
            path: File the problem was found in.
            line_number: 1-based line number, if known.
        """
        location = ""
        if path is not None:
            location = f"{path}:{line_number}: " if line_number is not None else f"{path}: "
        elif line_number is not None:
            location = f"line {line_number}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line_number = line_number


class TrainingDivergedError(LexseqError, ValueError):
    """The training loss became non-finite."""

    def __init__(self, batch_id: int, epoch: int, step: int):
        super().__init__(
            f"non-finite loss in batch {batch_id} (epoch {epoch}, step {step}); training aborted"
        )
        self.batch_id = batch_id
        self.epoch = epoch
        self.step = step
