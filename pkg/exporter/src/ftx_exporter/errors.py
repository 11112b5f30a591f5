"""Error taxonomy for the exporter."""


class ExportError(Exception):
    """Base class for everything this package raises on purpose."""


class ConfigError(ExportError):
    """An export job is self-contradictory or asks for the unsupported."""


class ImageError(ExportError):
    """An input image is unreadable or the pair is inconsistent."""


class CheckpointError(ExportError):
    """A checkpoint is missing, unreadable, or fails its digest check."""


class ShapeError(ExportError):
    """A backbone produced features that violate the declared grid contract."""
