"""Error hierarchy shared by every module.

Each error carries a stable ``code`` string (the class name) which is what the
API envelope and the CLI report to callers.
"""

from __future__ import annotations


class SugarChainError(Exception):
    """Base class; ``code`` is the stable machine-readable error name."""

    @property
    def code(self) -> str:
        return type(self).__name__


# -- wire / encoding -------------------------------------------------------

class DecodeError(SugarChainError):
    pass


# -- ledger ----------------------------------------------------------------

class EmptyValidatorSet(SugarChainError):
    pass


class DuplicateValidator(SugarChainError):
    pass


class BadPrevHash(SugarChainError):
    pass


class BadHeight(SugarChainError):
    pass


class BadBlockHash(SugarChainError):
    pass


class BadTxRoot(SugarChainError):
    pass


class BadProposerSignature(SugarChainError):
    pass


class DuplicateTransaction(SugarChainError):
    pass


class BadTransaction(SugarChainError):
    pass


class NotFound(SugarChainError):
    pass


# -- identity --------------------------------------------------------------

class AlreadyRegistered(SugarChainError):
    pass


class WeakPassword(SugarChainError):
    pass


class InvalidEmail(SugarChainError):
    pass


class UnknownUser(SugarChainError):
    pass


class BadPassword(SugarChainError):
    pass


class RecoveryFailed(SugarChainError):
    pass


class SessionExpired(SugarChainError):
    pass


class SessionUnknown(SugarChainError):
    pass


class DecryptAuthFailure(SugarChainError):
    pass


# -- supply chain ----------------------------------------------------------

class Unauthorized(SugarChainError):
    pass


class UnknownLot(SugarChainError):
    pass


class IllegalTransition(SugarChainError):
    pass


class StaleCustody(SugarChainError):
    pass


# -- consensus / simulation ------------------------------------------------

class NotMyTurn(SugarChainError):
    pass


class EmptyMempoolPolicy(SugarChainError):
    pass


class ConfigInvalid(SugarChainError):
    pass


# -- node service ----------------------------------------------------------

class PortInUse(SugarChainError):
    pass


class CorruptStore(SugarChainError):
    pass


# -- survey ----------------------------------------------------------------

class SchemaMismatch(SugarChainError):
    pass


class BadValue(SugarChainError):
    pass


class EmptyFile(SugarChainError):
    pass


class EmptyInput(SugarChainError):
    pass
