class ExtractError(Exception):
    """Base class for extractor failures."""


class AudioDecodeError(ExtractError):
    """Input audio could not be decoded."""


class LockfileError(ExtractError):
    """The checkpoint lockfile is missing, malformed, or inconsistent."""


class ModelLoadError(ExtractError):
    """A pinned checkpoint could not be loaded."""
