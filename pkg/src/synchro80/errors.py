"""Exception types shared across the library and the CLI."""

from __future__ import annotations


class Synchro80Error(Exception):
    """Base class for every error raised by this package."""


# -- command validation -------------------------------------------------------

class CommandError(Synchro80Error):
    pass


class BadDof(CommandError):
    pass


class BadTarget(CommandError):
    pass


class BadMode(CommandError):
    pass


# -- segment lifecycle --------------------------------------------------------

class SegmentError(Synchro80Error):
    pass


class AlreadyExists(SegmentError):
    pass


class NotFound(SegmentError):
    pass


class VersionMismatch(SegmentError):
    pass


class CorruptHeader(SegmentError):
    pass


class ResourceFailure(SegmentError):
    pass


# -- transport ----------------------------------------------------------------

class RingFull(Synchro80Error):
    """Command ring has no free slot.

    When raised by FrontendSession.pulse, `sent_tickets` holds the tickets of
    the prefix that was pushed before the ring filled up and `unsent` the
    number of commands still staged.
    """

    def __init__(self, message="command ring is full", *, sent_tickets=(), unsent=0):
        super().__init__(message)
        self.sent_tickets = list(sent_tickets)
        self.unsent = unsent


class Evicted(Synchro80Error):
    pass


class NotYet(Synchro80Error):
    pass


class NoObservationYet(Synchro80Error):
    pass


class NotBurstingMode(Synchro80Error):
    pass


class WaitTimeout(Synchro80Error):
    pass


class PeerStopped(Synchro80Error):
    pass


# -- backend / tooling --------------------------------------------------------

class DriverFailure(Synchro80Error):
    pass


class TrajectoryTooLong(Synchro80Error):
    pass


class BadConfig(Synchro80Error):
    pass


class FormatError(Synchro80Error):
    pass
