"""Exceptions raised by the library, each carrying the CLI exit code it maps to."""

from __future__ import annotations

EXIT_FAILURE = 1
EXIT_MISSING_INPUT = 3
EXIT_SCHEMA = 4


class PlaybookError(Exception):
    exit_code = EXIT_FAILURE

    @property
    def kind(self) -> str:
        return type(self).__name__


class MissingInputError(PlaybookError):
    exit_code = EXIT_MISSING_INPUT


class SchemaError(PlaybookError):
    exit_code = EXIT_SCHEMA


class InvalidConfigError(SchemaError):
    pass


class MalformedRecordError(SchemaError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line


class DimensionError(SchemaError):
    pass


class EmptyDatasetError(PlaybookError):
    pass


class UnknownTeamError(PlaybookError):
    pass


class DisconnectedScheduleError(PlaybookError):
    pass


class InsufficientDataError(PlaybookError):
    pass


class NotFittedError(PlaybookError):
    pass


class IncompatibleDistributionsError(PlaybookError):
    pass
