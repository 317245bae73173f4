"""Exception types shared across the package."""


class OatLabError(Exception):
    pass


class ShapeError(OatLabError, ValueError):
    pass


class DomainError(OatLabError, ValueError):
    pass


class ContractError(OatLabError, ValueError):
    pass


class EmptyBatchError(ContractError):
    pass


class FormatError(OatLabError, ValueError):
    """Malformed dataset file."""


class ConfigError(OatLabError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
