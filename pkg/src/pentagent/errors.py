"""Exception taxonomy shared across the engine.

Errors that represent recoverable tool outcomes (timeouts, launch failures)
are recorded on ExecutionRecord instead of raised; everything here signals a
contract violation or an unrecoverable condition for the caller.
"""

from __future__ import annotations


class PentagentError(Exception):
    """Base class for every engine error."""


# --- task tree -------------------------------------------------------------

class PttParseError(PentagentError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MalformedLine(PttParseError):
    pass


class DuplicateId(PttParseError):
    pass


class OrphanResultBullet(PttParseError):
    pass


class InvalidStatusToken(PttParseError):
    pass


# --- model gateway ---------------------------------------------------------

class ProviderUnavailable(PentagentError):
    pass


class TransientProviderError(ProviderUnavailable):
    """Raised by providers for retryable failures; the gateway retries."""


class UnknownModel(PentagentError):
    pass


class BudgetExceeded(PentagentError):
    pass


class UnmatchedScriptEntry(PentagentError):
    """A scripted provider got a request no entry matches."""


# --- refine loop -----------------------------------------------------------

class MalformedVerdict(PentagentError):
    pass


# --- planning --------------------------------------------------------------

class NoTaskAvailable(PentagentError):
    pass


# --- execution module ------------------------------------------------------

class UnparseablePlan(PentagentError):
    pass


# --- retrieval -------------------------------------------------------------

class DuplicateDocId(PentagentError):
    pass


class EmptyIndex(PentagentError):
    pass


class FixtureMiss(PentagentError):
    """Fixture-mode web search had no entry for the query."""


class NetworkDisabled(PentagentError):
    """Live network access attempted without the explicit opt-in."""


# --- executor --------------------------------------------------------------

class SessionExists(PentagentError):
    pass


class UnknownSession(PentagentError):
    pass


class MissingApproval(PentagentError):
    """A step reached the executor without a decided approval ticket."""


# --- approval --------------------------------------------------------------

class UnknownTicket(PentagentError):
    pass


class AlreadyDecided(PentagentError):
    pass


class MissingDenyReason(PentagentError):
    pass


class MissingEditedCommand(PentagentError):
    pass


# --- orchestrator / control plane -------------------------------------------

class ConfigInvalid(PentagentError):
    pass


class BundleMissing(PentagentError):
    pass


class CorruptLog(PentagentError):
    pass
