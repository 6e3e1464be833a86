"""Domain vocabulary: states, commands, observations, modes and configs.

Everything here is a plain value type, safe to copy between threads and
processes. A state is a single finite 64-bit float per degree of freedom;
anything richer travels in the opaque observation payload.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import IntEnum

from .errors import BadConfig, BadDof, BadMode, BadTarget

State = float


class QueuePolicy(IntEnum):
    APPEND = 0
    OVERWRITE = 1


class Mode(IntEnum):
    NORMAL = 0
    BURSTING = 1


class Status(IntEnum):
    INITIALIZING = 0
    RUNNING = 1
    STOPPED = 2


@dataclass(frozen=True)
class Direct:
    """Jump to the target at the first evaluation."""


@dataclass(frozen=True)
class Duration:
    """Reach the target after `duration_us` microseconds of logical time."""

    duration_us: int


@dataclass(frozen=True)
class Speed:
    """Move toward the target at `speed` state-units per logical second."""

    speed: float


@dataclass(frozen=True)
class Iteration:
    """Reach the target after exactly `count` backend iterations."""

    count: int


InterpolationMode = Direct | Duration | Speed | Iteration


@dataclass(frozen=True)
class QueueTicket:
    """Per-DOF enqueue sequence number, assigned when a command is pushed."""

    dof: int
    position: int


@dataclass(frozen=True)
class Command:
    dof: int
    target: State
    mode: InterpolationMode
    policy: QueuePolicy = QueuePolicy.APPEND
    ticket: QueueTicket | None = None

    def with_ticket(self, ticket: QueueTicket) -> "Command":
        return Command(self.dof, self.target, self.mode, self.policy, ticket)


@dataclass(frozen=True)
class Observation:
    """One iteration's snapshot as published to the shared history."""

    iteration: int
    timestamp_ns: int
    logical_time_ns: int
    observed: tuple[State, ...]
    desired: tuple[State, ...]
    payload: bytes = b""
    measured_period_ns: int = 0


_SEGMENT_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class BackendConfig:
    """Static parameters of one shared-memory session.

    `frequency_hz` paces the loop in NORMAL mode; in BURSTING mode it only
    defines logical time. Ring capacities must be powers of two so slot
    indexing can mask instead of dividing.
    """

    segment_id: str
    ndof: int
    frequency_hz: float
    mode: Mode = Mode.NORMAL
    history_capacity: int = 4096
    payload_capacity: int = 0
    command_ring_capacity: int = 1024

    def validate(self) -> None:
        if not _SEGMENT_ID_RE.match(self.segment_id):
            raise BadConfig(f"bad segment_id {self.segment_id!r}: need 1-64 chars of [A-Za-z0-9_-]")
        if self.ndof < 1:
            raise BadConfig(f"ndof must be positive, got {self.ndof}")
        if not (math.isfinite(self.frequency_hz) and self.frequency_hz > 0):
            raise BadConfig(f"frequency_hz must be positive and finite, got {self.frequency_hz}")
        if self.mode not in (Mode.NORMAL, Mode.BURSTING):
            raise BadConfig(f"bad mode {self.mode!r}")
        if not _is_pow2(self.history_capacity):
            raise BadConfig(f"history_capacity must be a power of two, got {self.history_capacity}")
        if not _is_pow2(self.command_ring_capacity):
            raise BadConfig(
                f"command_ring_capacity must be a power of two, got {self.command_ring_capacity}"
            )
        if self.payload_capacity < 0:
            raise BadConfig(f"payload_capacity must be >= 0, got {self.payload_capacity}")

    @property
    def frequency_uhz(self) -> int:
        return round(self.frequency_hz * 1_000_000)

    @property
    def nominal_period_ns(self) -> int:
        # 1e15 / micro-hertz, rounded to the nearest nanosecond
        uhz = self.frequency_uhz
        return (10**15 + uhz // 2) // uhz


def validate_command(cmd: Command, ndof: int) -> None:
    """Raise BadDof/BadTarget/BadMode unless every Command invariant holds."""
    if not isinstance(cmd.dof, int) or cmd.dof < 0 or cmd.dof >= ndof:
        raise BadDof(f"dof {cmd.dof} out of range for ndof {ndof}")
    if not math.isfinite(cmd.target):
        raise BadTarget(f"target must be finite, got {cmd.target}")
    mode = cmd.mode
    if isinstance(mode, Direct):
        return
    if isinstance(mode, Duration):
        if not isinstance(mode.duration_us, int) or mode.duration_us < 1:
            raise BadMode(f"duration_us must be a positive integer, got {mode.duration_us}")
    elif isinstance(mode, Speed):
        if not (math.isfinite(mode.speed) and mode.speed > 0):
            raise BadMode(f"speed must be positive and finite, got {mode.speed}")
    elif isinstance(mode, Iteration):
        if not isinstance(mode.count, int) or mode.count < 1:
            raise BadMode(f"iteration count must be a positive integer, got {mode.count}")
    else:
        raise BadMode(f"unknown interpolation mode {mode!r}")
