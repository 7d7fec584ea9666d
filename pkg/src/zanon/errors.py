"""Exception hierarchy shared by every module."""


class ZanonError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ZanonError):
    """Input data is malformed or inconsistent (CLI exit code 2)."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(DataError):
    """The ledger violates a structural invariant (double spend, negative pool...)."""


class UnresolvedInputError(DataError):
    """An analysis needed a resolved input address and found none."""


class ReorgError(DataError):
    """A block conflicts with what is already stored at that height."""


class RetriableError(ZanonError):
    """A transient failure; ingestion can resume from ``resume_height``."""

    def __init__(self, message, resume_height):
        super().__init__(f"{message} (resume from height {resume_height})")
        self.resume_height = resume_height


class NotFound(ZanonError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UndefinedResult(ZanonError, ValueError):
    """A statistic is undefined for the given input (e.g. a ratio over zero)."""


class ConfigError(ZanonError, ValueError):
    pass


class TagConflict(ZanonError, ValueError):
    pass


class ConservationError(DataError):
    """Value out of a transaction exceeds value into it."""

    def __init__(self, txid, fee):
        super().__init__(f"transaction {txid} creates value: fee would be {fee}")
        self.txid = txid
        self.fee = fee
