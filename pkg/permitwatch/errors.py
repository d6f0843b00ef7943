# permitwatch/errors.py


class PermitWatchError(Exception):
    """Base of every domain error; `code` is what the CLI and the job API report."""

    code = "error"


class InvariantError(PermitWatchError, ValueError):
    code = "invariant"


class FormatError(PermitWatchError):
    code = "format"


class TruncationError(FormatError):
    code = "truncated"


class UnsupportedVersionError(FormatError):
    code = "version"


class GapError(PermitWatchError):
    code = "gap"


class GeometryError(PermitWatchError, ValueError):
    code = "geometry"


class BoundsError(PermitWatchError, IndexError):
    code = "bounds"


class ConfigError(PermitWatchError, ValueError):
    code = "config"


class HistoryError(PermitWatchError):
    code = "history"


class ShapeError(PermitWatchError, ValueError):
    code = "shape"


class TrainingError(PermitWatchError):
    code = "training"

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch
