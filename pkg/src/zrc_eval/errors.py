"""Exception types shared across the package."""


class FormatError(ValueError):
    """A file does not follow its declared on-disk format."""


class ValidationError(ValueError):
    """Well-formed input that violates a documented invariant."""
