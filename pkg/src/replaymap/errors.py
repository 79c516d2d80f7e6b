"""Exception types shared across the package."""


class FileFormatError(ValueError):
    """A binary artifact (map, checkpoint, manifest) is corrupt or mismatched."""


class NumericsError(RuntimeError):
    """A numerical procedure failed (non-finite loss, singular solve)."""
