class IPCompError(Exception):
    """Base class for errors raised by this package."""


class CorruptDataError(IPCompError, ValueError):
    """A block, archive or session does not decode consistently."""


class InfeasibleRequestError(IPCompError, ValueError):
    """A retrieval request cannot be met by any plan."""


class SessionMismatchError(IPCompError, ValueError):
    """A session or previous reconstruction does not belong to the archive."""
