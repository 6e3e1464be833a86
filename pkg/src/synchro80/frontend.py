"""User-facing session: stage commands, send them, read the history.

A session is single-threaded; run one per thread or process. Any number of
sessions may operate on one segment concurrently.
"""

from __future__ import annotations

import time
from collections import deque

from .errors import Evicted, NoObservationYet, PeerStopped, RingFull, WaitTimeout
from .model import (
    Command,
    InterpolationMode,
    Observation,
    QueuePolicy,
    QueueTicket,
    Status,
    validate_command,
)
from .segment import POLL_INTERVAL_S, Segment, _deadline_ns, _expired, attach_segment


class FrontendSession:
    def __init__(self, segment_id: str):
        self._seg = attach_segment(segment_id)
        self._staged: deque[Command] = deque()
        self._pending: list[QueueTicket] = []

    @property
    def segment(self) -> Segment:
        return self._seg

    @property
    def ndof(self) -> int:
        return self._seg.ndof

    @property
    def iteration(self) -> int:
        return self._seg.iteration

    def close(self) -> None:
        self._seg.close()

    def __enter__(self) -> "FrontendSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- commands ----------------------------------------------------------

    def add_command(
        self,
        dof: int,
        target: float,
        mode: InterpolationMode,
        policy: QueuePolicy = QueuePolicy.APPEND,
    ) -> None:
        """Stage a command locally; nothing reaches the segment until pulse."""
        cmd = Command(dof, target, mode, policy)
        validate_command(cmd, self._seg.ndof)
        self._staged.append(cmd)

    @property
    def staged_count(self) -> int:
        return len(self._staged)

    @property
    def pending_tickets(self) -> list[QueueTicket]:
        return list(self._pending)

    def forget_pending(self) -> None:
        self._pending.clear()

    def pulse(self) -> list[QueueTicket]:
        """Push all staged commands in order; non-blocking.

        If the ring fills mid-send the prefix stays sent (its tickets ride on
        the RingFull exception and are kept as pending), the rest stays staged.
        """
        sent: list[QueueTicket] = []
        while self._staged:
            try:
                ticket = self._seg.push_command(self._staged[0])
            except RingFull:
                self._pending.extend(sent)
                raise RingFull(sent_tickets=sent, unsent=len(self._staged)) from None
            self._staged.popleft()
            sent.append(ticket)
        self._pending.extend(sent)
        return sent

    def pulse_and_wait(self, timeout: float | None = None) -> None:
        """Send staged commands and block until all pending ones completed."""
        deadline = _deadline_ns(timeout)
        while self._staged:
            try:
                self.pulse()
            except RingFull:
                if self._seg.status == Status.STOPPED:
                    raise PeerStopped("backend stopped while the ring was full") from None
                if _expired(deadline):
                    raise WaitTimeout(f"ring stayed full for {timeout}s") from None
                time.sleep(POLL_INTERVAL_S)
        seg = self._seg
        while True:
            waiting = [t for t in self._pending if seg.completed_count(t.dof) <= t.position]
            if not waiting:
                self._pending.clear()
                return
            if seg.status == Status.STOPPED:
                raise PeerStopped(f"backend stopped with {len(waiting)} commands unfinished")
            if _expired(deadline):
                raise WaitTimeout(f"{len(waiting)} commands not completed within {timeout}s")
            time.sleep(POLL_INTERVAL_S)

    # -- observations --------------------------------------------------------

    def latest(self) -> Observation:
        for _ in range(8):
            head = self._seg.iteration
            if head == 0:
                raise NoObservationYet("backend has not completed an iteration yet")
            try:
                return self._seg.read_observation(head - 1)
            except Evicted:
                continue  # lapped mid-read, take a fresher head
        raise Evicted("latest observation kept being overwritten")

    def read(self, iteration: int) -> Observation:
        return self._seg.read_observation(iteration)

    def wait_for_iteration(self, iteration: int, timeout: float | None = None) -> Observation:
        """Block until the given iteration exists, then return it.

        Tailing with iteration = last + 1 yields every observation exactly
        once while the caller stays within the history capacity.
        """
        deadline = _deadline_ns(timeout)
        seg = self._seg
        while True:
            if seg.iteration > iteration:
                return seg.read_observation(iteration)
            if seg.status == Status.STOPPED:
                raise PeerStopped(f"backend stopped before iteration {iteration}")
            if _expired(deadline):
                raise WaitTimeout(f"iteration {iteration} not reached within {timeout}s")
            time.sleep(POLL_INTERVAL_S)

    # -- bursting ----------------------------------------------------------

    def burst(self, n: int, blocking: bool = True, timeout: float | None = None) -> None:
        """Ask the backend to run n iterations; optionally wait for them."""
        self._seg.request_burst(n)
        if blocking:
            self._seg.await_burst_done(timeout=timeout)
