"""Domain error hierarchy.

Every failure the public API can signal is a subclass of ProvTrackError so
front ends (CLI, HTTP service) can map errors to exit codes / status codes
without string matching. Error *names* are part of the contract: the CLI
prints ``error_name(exc)`` and tests assert on types, never messages.
"""

from __future__ import annotations


class ProvTrackError(Exception):
    """Base class for all domain errors."""


def error_name(exc: ProvTrackError) -> str:
    """Stable, human-facing name of a domain error ("UnknownItem", ...)."""
    name = type(exc).__name__
    return name[: -len("Error")] if name.endswith("Error") else name


# -- item store --------------------------------------------------------------

class EmptyNameError(ProvTrackError):
    pass


class MissingAgentError(ProvTrackError):
    pass


class MissingJustificationError(ProvTrackError):
    pass


class UnknownItemError(ProvTrackError):
    pass


class UnknownVersionError(ProvTrackError):
    pass


# -- analysis model ----------------------------------------------------------

class EmptyPipelineError(ProvTrackError):
    pass


class UnknownAlgorithmError(UnknownItemError):
    pass


class UnknownAlgorithmVersionError(UnknownVersionError):
    pass


class EmptyLocationError(ProvTrackError):
    pass


class UnknownUserError(UnknownItemError):
    pass


class UnknownDatasetError(UnknownItemError):
    pass


class UnknownPipelineError(UnknownItemError):
    pass


class MissingPurposeError(ProvTrackError):
    pass


class WrongStateError(ProvTrackError):
    pass


class EmptyDatasetError(ProvTrackError):
    pass


class MissingLocationError(ProvTrackError):
    pass


# -- workflow engine ---------------------------------------------------------

class OutOfOrderStepError(ProvTrackError):
    pass


class BrokerUnavailableError(ProvTrackError):
    pass


# -- broker ------------------------------------------------------------------

class DuplicateJobIdError(ProvTrackError):
    pass


class UnknownTokenError(ProvTrackError):
    pass


# -- PROV export / PROV-N ----------------------------------------------------

class InvalidDocumentError(ProvTrackError):
    pass


class ProvNSyntaxError(ProvTrackError):
    """PROV-N text could not be parsed; carries the 1-based position."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownPrefixError(ProvTrackError):
    pass


class UnsupportedStatementError(ProvTrackError):
    """A syntactically plausible statement outside the supported subset."""

    def __init__(self, statement: str, line: int, column: int) -> None:
        super().__init__(f"unsupported statement '{statement}' (line {line}, column {column})")
        self.statement = statement
        self.line = line
        self.column = column


# -- query service -----------------------------------------------------------

class MalformedQueryError(ProvTrackError):
    pass


class NeverSubmittedError(ProvTrackError):
    pass


# -- persistence -------------------------------------------------------------

class SchemaError(ProvTrackError):
    pass


class VersionUnsupportedError(ProvTrackError):
    pass


class NonEmptyTargetError(ProvTrackError):
    pass


class DanglingReferenceError(ProvTrackError):
    pass
