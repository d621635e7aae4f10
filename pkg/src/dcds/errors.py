"""Exception hierarchy shared by every stage of the pipeline."""


class DCDSError(Exception):
    """Base class for all errors raised by this package."""


# -- builder / IR ---------------------------------------------------------

class InvalidIdentifier(DCDSError, ValueError):
    pass


class DuplicateAttribute(DCDSError):
    pass


class DuplicateSymbol(DCDSError):
    pass


class SpecTypeError(DCDSError, TypeError):
    pass


class UnknownSymbol(DCDSError, LookupError):
    pass


class CyclicEmbedding(DCDSError):
    pass


class MissingReturn(DCDSError):
    pass


class EmptyThenBranch(DCDSError):
    pass


class UnknownExposedFunction(DCDSError, LookupError):
    pass


# -- concurrency control injection -----------------------------------------

class AlreadyInjected(DCDSError):
    pass


# -- runtime ---------------------------------------------------------------

class InvalidState(DCDSError):
    pass


class InvalidRef(DCDSError):
    pass


class InvalidColumn(DCDSError, IndexError):
    pass


class LockProtocolViolation(DCDSError):
    pass


class CapacityExceeded(DCDSError):
    pass


class IndexOutOfBounds(DCDSError, IndexError):
    pass


class MissingKey(DCDSError, KeyError):
    pass


class NullDereference(DCDSError):
    pass


class SchemaConflict(DCDSError):
    pass


# -- executor --------------------------------------------------------------

class UnknownMethod(DCDSError, LookupError):
    pass


class ArityOrTypeMismatch(DCDSError, TypeError):
    pass


class Conflict(DCDSError):
    """A NO_WAIT lock request failed; the running attempt must abort.

    Never escapes :meth:`Instance.invoke`, which retries the method.
    """
