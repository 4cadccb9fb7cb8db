"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula or routine is defined."""


class DegenerateError(DomainError):
    """Input is valid but carries no information for the requested split or fit."""


class ConfigError(ValueError):
    """A configuration document failed validation.

    ``fields`` lists the offending keys so callers can report all of them at once.
    """

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


class MatrixFileError(OSError):
    """A matrix file could not be parsed (bad magic, header, or payload length)."""
