"""Deterministic simulated devices and ball-trajectory replay files."""

from __future__ import annotations

import os
import struct

from .backend import Driver
from .errors import FormatError

TRAJECTORY_MAGIC = b"S80TRAJ\0"
TRAJECTORY_VERSION = 1


class IntegratorDriver(Driver):
    """Pure integrator: state += control * dt."""

    def __init__(self, ndof: int, dt: float, initial: float = 0.0):
        self.state = [initial] * ndof
        self.dt = dt

    def set(self, control):
        for d, u in enumerate(control):
            self.state[d] += u * self.dt

    def get(self):
        return list(self.state), b""


class MuscleDriver(Driver):
    """First-order pressure lag: p += (u - p) * dt / tau."""

    def __init__(self, ndof: int, dt: float, tau: float = 0.1, initial: float = 0.0):
        if tau <= 0:
            raise ValueError(f"tau must be positive, got {tau}")
        self.pressures = [initial] * ndof
        self.alpha = dt / tau

    def set(self, control):
        a = self.alpha
        p = self.pressures
        for d, u in enumerate(control):
            p[d] += (u - p[d]) * a

    def get(self):
        return list(self.pressures), b""


class MirrorSimDriver(Driver):
    """Kinematic mirror plus ball replay.

    Joint positions copy the control input verbatim; each get() advances the
    replay by one record and returns it as the payload (little-endian f64s).
    """

    def __init__(self, ndof: int, records):
        records = [tuple(float(v) for v in r) for r in records]
        if not records:
            raise ValueError("need at least one replay record")
        width = len(records[0])
        if any(len(r) != width for r in records):
            raise ValueError("replay records must all have the same length")
        self.q = [0.0] * ndof
        self.records = records
        self.step_index = 0
        self._pack = struct.Struct(f"<{width}d")

    @property
    def payload_size(self) -> int:
        return self._pack.size

    def set(self, control):
        self.q = list(control)

    def get(self):
        record = self.records[self.step_index % len(self.records)]
        self.step_index += 1
        return list(self.q), self._pack.pack(*record)


# -- replay files ---------------------------------------------------------

def replay_record(records, path: str) -> None:
    """Write replay records (equal-length float tuples) to a file."""
    records = [tuple(float(v) for v in r) for r in records]
    width = len(records[0]) if records else 0
    if any(len(r) != width for r in records):
        raise ValueError("replay records must all have the same length")
    with open(path, "wb") as f:
        f.write(TRAJECTORY_MAGIC)
        f.write(struct.pack("<IIQ", TRAJECTORY_VERSION, width, len(records)))
        pack = struct.Struct(f"<{width}d")
        for r in records:
            f.write(pack.pack(*r))


def replay_load(path: str) -> list[tuple[float, ...]]:
    """Load replay records; raises FormatError on bad magic or truncation."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 24 or data[:8] != TRAJECTORY_MAGIC:
        raise FormatError(f"{path}: not a trajectory file")
    version, width, count = struct.unpack_from("<IIQ", data, 8)
    if version != TRAJECTORY_VERSION:
        raise FormatError(f"{path}: trajectory version {version} unsupported")
    expected = 24 + 8 * width * count
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} != expected {expected}")
    unpack = struct.Struct(f"<{width}d")
    return [unpack.unpack_from(data, 24 + 8 * width * k) for k in range(count)]


def ballistic_trajectory(
    count: int,
    dt: float,
    p0=(0.0, 0.0, 1.0),
    v0=(2.0, 0.0, 3.0),
    g: float = 9.81,
) -> list[tuple[float, ...]]:
    """Closed-form projectile arc sampled at t = k * dt: (pos, vel) records."""
    records = []
    for k in range(count):
        t = k * dt
        records.append((
            p0[0] + v0[0] * t,
            p0[1] + v0[1] * t,
            p0[2] + v0[2] * t - 0.5 * g * t * t,
            v0[0],
            v0[1],
            v0[2] - g * t,
        ))
    return records


DRIVER_NAMES = ("integrator", "muscle", "mirror_sim")


def build_driver(name: str, params: dict, config) -> Driver:
    """Instantiate a registry driver from CLI config parameters."""
    dt = 1.0 / config.frequency_hz
    if name == "integrator":
        return IntegratorDriver(config.ndof, dt, initial=float(params.get("initial", 0.0)))
    if name == "muscle":
        return MuscleDriver(
            config.ndof, dt,
            tau=float(params.get("tau", 0.1)),
            initial=float(params.get("initial", 0.0)),
        )
    if name == "mirror_sim":
        path = params.get("trajectory")
        if not path:
            raise FormatError("mirror_sim needs a driver.trajectory = <path> parameter")
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        return MirrorSimDriver(config.ndof, replay_load(path))
    raise FormatError(f"unknown driver {name!r}, expected one of {', '.join(DRIVER_NAMES)}")
