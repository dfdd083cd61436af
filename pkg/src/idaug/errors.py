"""Exception types raised across the package."""


class IdaugError(Exception):
    """Base class for all errors raised by idaug."""


class ManifestError(IdaugError):
    """Malformed, missing or inconsistent manifest file."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NonSalientError(IdaugError):
    """The mask has no nonzero pixel."""


class DegenerateObjectError(IdaugError):
    """The object's bounding box has zero area."""


class DimensionMismatchError(IdaugError):
    """Two rasters that must share dimensions do not."""


class DecodeError(IdaugError):
    """An image file could not be read or decoded."""


class InpaintError(IdaugError):
    """Inpainting could not be performed."""


class BackendError(InpaintError):
    """The external inpainting command failed."""

    def __init__(self, message: str, stderr: str = ""):
        self.stderr = stderr
        super().__init__(f"{message}: {stderr.strip()}" if stderr.strip() else message)


class ImageTooSmallError(IdaugError):
    """Image is too small for the requested LBP neighbourhood."""


class ZeroVectorError(IdaugError):
    """Cosine similarity is undefined for a zero vector."""


class MatchError(IdaugError):
    """Background ranking or selection failed."""


class PlacementError(IdaugError):
    """The object could not be placed into the background."""


class EvaluationError(IdaugError):
    """Metric computation failed."""


class ConfigError(IdaugError):
    """Invalid configuration file or override."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
