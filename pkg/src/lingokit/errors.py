"""Exception hierarchy shared by all lingokit modules."""

from __future__ import annotations


class LingoError(Exception):
    """Base class for every error raised by lingokit."""


class ParseError(LingoError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ValidationError(LingoError):
    pass


class DuplicateRuleError(LingoError):
    pass


class EmptyLexiconError(LingoError):
    pass


class EmptyInputError(LingoError):
    pass


class UnknownChapterError(LingoError):
    pass


class MissingFieldError(LingoError):
    def __init__(self, field: str):
        self.field = field
        super().__init__(field)


class ConfigError(LingoError):
    pass


class ResourceError(LingoError):
    pass


class AnswerParseError(LingoError):
    pass


class LengthMismatchError(LingoError):
    pass


class EmptyCorpusError(LingoError):
    pass


class AlignmentError(LingoError):
    pass


class InsufficientDataError(LingoError):
    pass


class BackendError(LingoError):
    """Failure talking to a completion backend.

    ``kind`` is one of ``transport``, ``protocol``, ``rate-limited`` or
    ``timeout``. Only ``protocol`` errors are never retried.
    """

    KINDS = ("transport", "protocol", "rate-limited", "timeout")

    def __init__(self, kind: str, message: str = "", status: int | None = None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown backend error kind {kind!r}")
        self.kind = kind
        self.status = status
        super().__init__(f"[{kind}] {message}" if message else kind)

    @property
    def retryable(self) -> bool:
        return self.kind != "protocol"
