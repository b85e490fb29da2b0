from __future__ import annotations


class UnitsError(Exception):
    """Base class for every error raised by the units package."""


class DimensionError(UnitsError, ValueError):
    pass


class ContractError(UnitsError, ValueError):
    pass


class TapeStateError(UnitsError, RuntimeError):
    pass


class ConfigError(UnitsError, ValueError):
    pass


class DataError(UnitsError, ValueError):
    def __init__(self, message: str, *, line: int | None = None) -> None:
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class RegistryError(UnitsError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class CheckpointError(UnitsError, ValueError):
    pass
