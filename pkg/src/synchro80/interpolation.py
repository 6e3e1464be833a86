"""Per-iteration desired-state computation for active commands.

Values come from the closed-form fraction each step, never from incremental
accumulation, so the final value can be returned as the target verbatim and
trajectories stay drift-free. All elapsed time is logical time (iteration
count times the nominal period), identical in normal and bursting mode.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TrajectoryTooLong
from .model import Command, Direct, Duration, Iteration, Speed, State

DEFAULT_TRAJECTORY_CAP = 10_000_000


@dataclass(frozen=True)
class ActiveCommand:
    """A command plus the desired state and instant it started from.

    `start_iteration`/`start_logical_ns` name the instant one iteration
    before the first evaluation: a command activated during iteration k
    produces its first value at k with start fields of iteration k - 1.
    """

    cmd: Command
    start_state: State
    start_iteration: int
    start_logical_ns: int


def _lerp(start: float, target: float, fraction: float) -> float:
    value = start + fraction * (target - start)
    lo, hi = (start, target) if start <= target else (target, start)
    # clamp: rounding near fraction 1 must not overshoot the endpoints
    if value < lo:
        return lo
    if value > hi:
        return hi
    return value


def desired_at(
    ac: ActiveCommand, iteration: int, logical_ns: int, nominal_period_ns: int
) -> tuple[State, bool]:
    """Desired state at one iteration and whether the command completes there.

    Requires iteration >= ac.start_iteration + 1 and logical_ns consistent
    with it. On completion the target is returned bit-exactly.
    """
    target = ac.cmd.target
    mode = ac.cmd.mode
    if isinstance(mode, Direct):
        return target, True
    if isinstance(mode, Iteration):
        k = iteration - ac.start_iteration
        if k >= mode.count:
            return target, True
        return _lerp(ac.start_state, target, k / mode.count), False
    if isinstance(mode, Duration):
        total_ns: float = mode.duration_us * 1000
    else:  # Speed
        if target == ac.start_state:
            return target, True
        total_ns = abs(target - ac.start_state) / mode.speed * 1e9
    elapsed = logical_ns - ac.start_logical_ns
    if elapsed >= total_ns:
        return target, True
    fraction = elapsed / total_ns if elapsed > 0 else 0.0
    return _lerp(ac.start_state, target, fraction), False


def trajectory(
    ac: ActiveCommand, nominal_period_ns: int, max_steps: int = DEFAULT_TRAJECTORY_CAP
) -> list[State]:
    """Expand a command into its full per-iteration desired-state sequence.

    The sequence runs from the first evaluation through completion; the last
    element equals the target exactly. Raises TrajectoryTooLong past
    `max_steps`, which signals a near-zero speed.
    """
    out: list[State] = []
    iteration = ac.start_iteration
    logical_ns = ac.start_logical_ns
    while True:
        iteration += 1
        logical_ns += nominal_period_ns
        value, done = desired_at(ac, iteration, logical_ns, nominal_period_ns)
        out.append(value)
        if done:
            return out
        if len(out) >= max_steps:
            raise TrajectoryTooLong(f"command did not complete within {max_steps} iterations")
