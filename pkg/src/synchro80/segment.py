"""Shared-memory transport: segment lifecycle, command ring, history, bursts.

One backend owns a segment; any number of frontends attach to it. Three
independent channels share the mapping:

- command ring: multi-producer/single-consumer. Slot reservation (cursor and
  per-DOF enqueue counter) is serialized by an exclusive OS file lock held
  for the reservation step only; the payload is published afterwards by
  stamping the slot's sequence word.
- observation history: single writer, any number of readers. Slots carry a
  seqlock-style stamp pair (odd while a write is in progress, a unique even
  value per iteration once consistent) so readers never block the writer and
  torn reads are detected and retried.
- burst handshake: two monotonic counters; requesters add under the file
  lock, the owner completes with plain stores.

Blocking waits are sleep-polls at 100 us so a dead peer can always be
detected via the published status word. Field-sized aligned reads/writes on
the mapping are assumed atomic (true for 8-byte aligned accesses on the
64-bit Linux targets this supports).
"""

from __future__ import annotations

import fcntl
import mmap
import os
import struct
import tempfile
import threading
import time
from contextlib import contextmanager

from . import layout as ly
from .errors import (
    AlreadyExists,
    CorruptHeader,
    Evicted,
    NotBurstingMode,
    NotFound,
    NotYet,
    PeerStopped,
    ResourceFailure,
    RingFull,
    VersionMismatch,
    WaitTimeout,
)
from .layout import SegmentLayout
from .model import (
    BackendConfig,
    Command,
    Direct,
    Duration,
    Iteration,
    Mode,
    Observation,
    QueuePolicy,
    QueueTicket,
    Speed,
    Status,
)

SHM_PREFIX = "synchro80."
POLL_INTERVAL_S = 0.0001  # 100 us cap on sleep-poll granularity
TORN_READ_RETRIES = 64

_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_OBS_META = struct.Struct("<QQQQ")  # iteration, timestamp, logical, measured_period


def shm_dir() -> str:
    override = os.environ.get("SYNCHRO80_SHM_DIR")
    if override:
        return override
    return "/dev/shm" if os.path.isdir("/dev/shm") else tempfile.gettempdir()


def shm_path(segment_id: str) -> str:
    return os.path.join(shm_dir(), SHM_PREFIX + segment_id)


def _pid_alive(pid: int) -> bool:
    if pid <= 0:
        return False
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def _deadline_ns(timeout_s: float | None) -> int | None:
    if timeout_s is None:
        return None
    return time.monotonic_ns() + int(timeout_s * 1e9)


def _expired(deadline: int | None) -> bool:
    return deadline is not None and time.monotonic_ns() >= deadline


class Segment:
    """Handle on one mapped segment. Not safe for concurrent use by threads;
    open one handle per thread or process instead."""

    def __init__(self, path: str, fd: int, mm: mmap.mmap, lay: SegmentLayout, owner: bool):
        self._path = path
        self._fd = fd
        self._mm = mm
        self._lay = lay
        self._owner = owner
        self._closed = False
        self._destroyed = False
        self._pop_cursor = 0
        self._lock = threading.Lock()

    # -- raw field access ------------------------------------------------

    def _u64(self, off: int) -> int:
        return _U64.unpack_from(self._mm, off)[0]

    def _put_u64(self, off: int, value: int) -> None:
        _U64.pack_into(self._mm, off, value)

    def _u32(self, off: int) -> int:
        return _U32.unpack_from(self._mm, off)[0]

    # -- header views ----------------------------------------------------

    @property
    def segment_id(self) -> str:
        return os.path.basename(self._path)[len(SHM_PREFIX):]

    @property
    def layout(self) -> SegmentLayout:
        return self._lay

    @property
    def ndof(self) -> int:
        return self._lay.ndof

    @property
    def history_capacity(self) -> int:
        return self._lay.history_capacity

    @property
    def payload_capacity(self) -> int:
        return self._lay.payload_capacity

    @property
    def command_ring_capacity(self) -> int:
        return self._lay.command_ring_capacity

    @property
    def frequency_uhz(self) -> int:
        return self._u64(ly.HDR_FREQUENCY_UHZ)

    @property
    def frequency_hz(self) -> float:
        return self.frequency_uhz / 1e6

    @property
    def nominal_period_ns(self) -> int:
        uhz = self.frequency_uhz
        return (10**15 + uhz // 2) // uhz

    @property
    def mode(self) -> Mode:
        return Mode(_U8.unpack_from(self._mm, ly.HDR_MODE)[0])

    @property
    def status(self) -> Status:
        return Status(_U8.unpack_from(self._mm, ly.HDR_STATUS)[0])

    def set_status(self, status: Status) -> None:
        _U8.pack_into(self._mm, ly.HDR_STATUS, int(status))

    @property
    def iteration(self) -> int:
        """Count of completed iterations (latest index + 1)."""
        return self._u64(ly.HDR_ITERATION)

    @property
    def burst_requested(self) -> int:
        return self._u64(ly.HDR_BURST_REQUESTED)

    @property
    def burst_completed(self) -> int:
        return self._u64(ly.HDR_BURST_COMPLETED)

    @property
    def owner_pid(self) -> int:
        return self._u64(ly.HDR_OWNER_PID)

    def config(self) -> BackendConfig:
        return BackendConfig(
            segment_id=self.segment_id,
            ndof=self.ndof,
            frequency_hz=self.frequency_hz,
            mode=self.mode,
            history_capacity=self.history_capacity,
            payload_capacity=self.payload_capacity,
            command_ring_capacity=self.command_ring_capacity,
        )

    def enqueue_count(self, dof: int) -> int:
        return self._u64(self._lay.enqueue_counts_offset + 8 * dof)

    def completed_count(self, dof: int) -> int:
        return self._u64(self._lay.completed_counts_offset + 8 * dof)

    def add_completed(self, dof: int, k: int) -> None:
        # owner only: single writer of the completed counters
        off = self._lay.completed_counts_offset + 8 * dof
        self._put_u64(off, self._u64(off) + k)

    def queue_depth(self) -> int:
        return sum(
            self.enqueue_count(d) - self.completed_count(d) for d in range(self.ndof)
        )

    # -- producer exclusion ----------------------------------------------

    @contextmanager
    def _reservation(self):
        # flock gives crash-safe cross-process exclusion; the header word
        # mirrors the holder pid so the layout stays inspectable
        with self._lock:
            fcntl.flock(self._fd, fcntl.LOCK_EX)
            try:
                _U32.pack_into(self._mm, ly.HDR_PRODUCER_EXCLUSION, os.getpid() & 0xFFFFFFFF)
                yield
            finally:
                _U32.pack_into(self._mm, ly.HDR_PRODUCER_EXCLUSION, 0)
                fcntl.flock(self._fd, fcntl.LOCK_UN)

    # -- command ring ------------------------------------------------------

    def push_command(self, cmd: Command) -> QueueTicket:
        """Publish a validated command; never blocks, raises RingFull instead."""
        lay = self._lay
        mask = lay.command_ring_capacity - 1
        with self._reservation():
            head = self._u64(ly.HDR_COMMAND_HEAD)
            slot_off = lay.command_slot_offset(head & mask)
            if self._u64(slot_off + ly.CMD_SEQ) != head:
                raise RingFull(unsent=1)
            position = self.enqueue_count(cmd.dof)
            self._put_u64(lay.enqueue_counts_offset + 8 * cmd.dof, position + 1)
            self._put_u64(ly.HDR_COMMAND_HEAD, head + 1)
        mode = cmd.mode
        if isinstance(mode, Direct):
            tag, param = ly.MODE_TAG_DIRECT, b"\0" * 8
        elif isinstance(mode, Duration):
            tag, param = ly.MODE_TAG_DURATION, _U64.pack(mode.duration_us)
        elif isinstance(mode, Speed):
            tag, param = ly.MODE_TAG_SPEED, _F64.pack(mode.speed)
        else:
            tag, param = ly.MODE_TAG_ITERATION, _U64.pack(mode.count)
        _U32.pack_into(self._mm, slot_off + ly.CMD_DOF, cmd.dof)
        _U8.pack_into(self._mm, slot_off + ly.CMD_POLICY, int(cmd.policy))
        _U8.pack_into(self._mm, slot_off + ly.CMD_MODE_TAG, tag)
        self._mm[slot_off + ly.CMD_MODE_PARAM : slot_off + ly.CMD_MODE_PARAM + 8] = param
        _F64.pack_into(self._mm, slot_off + ly.CMD_TARGET, cmd.target)
        self._put_u64(slot_off + ly.CMD_POSITION, position)
        self._put_u64(slot_off + ly.CMD_SEQ, head + 1)  # publish
        return QueueTicket(cmd.dof, position)

    def pop_commands(self, max_count: int) -> list[Command]:
        """Consume up to max_count commands in ring order. Single consumer."""
        lay = self._lay
        mask = lay.command_ring_capacity - 1
        out: list[Command] = []
        cursor = self._pop_cursor
        while len(out) < max_count:
            slot_off = lay.command_slot_offset(cursor & mask)
            if self._u64(slot_off + ly.CMD_SEQ) != cursor + 1:
                break  # empty, or next producer has reserved but not published
            dof = self._u32(slot_off + ly.CMD_DOF)
            policy = QueuePolicy(_U8.unpack_from(self._mm, slot_off + ly.CMD_POLICY)[0])
            tag = _U8.unpack_from(self._mm, slot_off + ly.CMD_MODE_TAG)[0]
            param = bytes(self._mm[slot_off + ly.CMD_MODE_PARAM : slot_off + ly.CMD_MODE_PARAM + 8])
            if tag == ly.MODE_TAG_DIRECT:
                mode = Direct()
            elif tag == ly.MODE_TAG_DURATION:
                mode = Duration(_U64.unpack(param)[0])
            elif tag == ly.MODE_TAG_SPEED:
                mode = Speed(_F64.unpack(param)[0])
            else:
                mode = Iteration(_U64.unpack(param)[0])
            target = _F64.unpack_from(self._mm, slot_off + ly.CMD_TARGET)[0]
            position = self._u64(slot_off + ly.CMD_POSITION)
            out.append(Command(dof, target, mode, policy, QueueTicket(dof, position)))
            self._put_u64(slot_off + ly.CMD_SEQ, cursor + lay.command_ring_capacity)  # free
            cursor += 1
        self._pop_cursor = cursor
        return out

    # -- observation history ---------------------------------------------

    def write_observation(self, obs: Observation) -> None:
        """Publish one iteration's snapshot. Owner only, one writer."""
        lay = self._lay
        if obs.iteration != self.iteration:
            raise ValueError(
                f"observation iteration {obs.iteration} != segment iteration {self.iteration}"
            )
        if len(obs.payload) > lay.payload_capacity:
            raise ValueError(
                f"payload length {len(obs.payload)} exceeds capacity {lay.payload_capacity}"
            )
        off = lay.observation_slot_offset(obs.iteration & (lay.history_capacity - 1))
        seq = 2 * obs.iteration + 1
        self._put_u64(off, seq)  # odd: write in progress
        _OBS_META.pack_into(
            self._mm, off + 8,
            obs.iteration, obs.timestamp_ns, obs.logical_time_ns, obs.measured_period_ns,
        )
        n = lay.ndof
        struct.pack_into(f"<{2 * n}d", self._mm, off + lay.obs_desired_offset,
                         *obs.desired, *obs.observed)
        if lay.payload_capacity:
            payload = obs.payload.ljust(lay.payload_capacity, b"\0")
            p0 = off + lay.obs_payload_offset
            self._mm[p0 : p0 + lay.payload_capacity] = payload
        self._put_u64(off + lay.obs_seq_post_offset, seq + 1)
        self._put_u64(off, seq + 1)  # even: consistent
        self._put_u64(ly.HDR_ITERATION, obs.iteration + 1)

    def read_observation(self, iteration: int) -> Observation:
        """Consistent snapshot of one past iteration; raises NotYet/Evicted."""
        lay = self._lay
        off = lay.observation_slot_offset(iteration & (lay.history_capacity - 1))
        expect = 2 * iteration + 2
        for _ in range(TORN_READ_RETRIES):
            head = self.iteration
            if iteration >= head:
                raise NotYet(f"iteration {iteration} not yet written (head {head})")
            if iteration < head - lay.history_capacity:
                raise Evicted(f"iteration {iteration} evicted (head {head})")
            if self._u64(off) != expect:
                continue
            it, ts, logical, period = _OBS_META.unpack_from(self._mm, off + 8)
            n = lay.ndof
            values = struct.unpack_from(f"<{2 * n}d", self._mm, off + lay.obs_desired_offset)
            payload = bytes(
                self._mm[off + lay.obs_payload_offset : off + lay.obs_payload_offset + lay.payload_capacity]
            )
            if self._u64(off + lay.obs_seq_post_offset) != expect or self._u64(off) != expect:
                continue
            return Observation(
                iteration=it,
                timestamp_ns=ts,
                logical_time_ns=logical,
                observed=values[n:],
                desired=values[:n],
                payload=payload,
                measured_period_ns=period,
            )
        raise Evicted(f"iteration {iteration} kept being overwritten while reading")

    # -- burst handshake ---------------------------------------------------

    def request_burst(self, n: int) -> None:
        if self.mode != Mode.BURSTING:
            raise NotBurstingMode(f"segment {self.segment_id!r} runs in NORMAL mode")
        if n < 1:
            raise ValueError(f"burst size must be >= 1, got {n}")
        with self._reservation():
            self._put_u64(ly.HDR_BURST_REQUESTED, self.burst_requested + n)

    def complete_iterations(self, k: int) -> None:
        # owner only: single writer of burst_completed
        self._put_u64(ly.HDR_BURST_COMPLETED, self.burst_completed + k)

    def await_burst(self, timeout: float | None = None, stop: threading.Event | None = None) -> int:
        """Owner side: block until iterations are pending; 0 means stop was set."""
        deadline = _deadline_ns(timeout)
        while True:
            pending = self.burst_requested - self.burst_completed
            if pending > 0:
                return pending
            if stop is not None and stop.is_set():
                return 0
            if _expired(deadline):
                raise WaitTimeout("no burst request arrived in time")
            time.sleep(POLL_INTERVAL_S)

    def await_burst_done(self, timeout: float | None = None) -> None:
        """Block until every iteration requested before this call has run."""
        goal = self.burst_requested
        deadline = _deadline_ns(timeout)
        while self.burst_completed < goal:
            if self.status == Status.STOPPED:
                raise PeerStopped(f"backend of {self.segment_id!r} stopped mid-burst")
            if _expired(deadline):
                raise WaitTimeout(f"burst not completed within {timeout}s")
            time.sleep(POLL_INTERVAL_S)

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._mm.close()
        os.close(self._fd)

    def destroy(self) -> None:
        """Owner teardown: publish STOPPED so blocked peers unblock, then unlink."""
        if not self._owner:
            raise ResourceFailure("only the creating backend may destroy a segment")
        if self._destroyed:
            return
        self._destroyed = True
        self.set_status(Status.STOPPED)
        try:
            os.unlink(self._path)
        except FileNotFoundError:
            pass
        self.close()

    def __enter__(self) -> "Segment":
        return self

    def __exit__(self, *exc) -> None:
        if self._owner:
            self.destroy()
        else:
            self.close()


def _read_exact(fd: int, offset: int, size: int) -> bytes:
    return os.pread(fd, size, offset)


def _segment_is_live(fd: int) -> bool:
    header = _read_exact(fd, 0, ly.HEADER_SIZE)
    if len(header) < ly.HEADER_SIZE or header[:8] != ly.MAGIC:
        return False  # corrupt or foreign file: reclaimable
    status = header[ly.HDR_STATUS]
    if status == int(Status.STOPPED):
        return False
    (pid,) = _U64.unpack_from(header, ly.HDR_OWNER_PID)
    return _pid_alive(pid)


def create_segment(config: BackendConfig) -> Segment:
    """Create and initialize a fresh segment, reclaiming stale leftovers.

    The segment is built under a temporary name and linked into place so
    attachers never observe a half-initialized header.
    """
    config.validate()
    lay = SegmentLayout(
        ndof=config.ndof,
        history_capacity=config.history_capacity,
        payload_capacity=config.payload_capacity,
        command_ring_capacity=config.command_ring_capacity,
    )
    path = shm_path(config.segment_id)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        fd = os.open(tmp, os.O_CREAT | os.O_EXCL | os.O_RDWR, 0o600)
    except OSError as e:
        raise ResourceFailure(f"cannot create {tmp}: {e}") from e
    mm = None
    try:
        os.ftruncate(fd, lay.segment_size)
        mm = mmap.mmap(fd, lay.segment_size)
        mm[0:8] = ly.MAGIC
        _U32.pack_into(mm, ly.HDR_VERSION, ly.SEGMENT_VERSION)
        _U32.pack_into(mm, ly.HDR_NDOF, config.ndof)
        _U64.pack_into(mm, ly.HDR_FREQUENCY_UHZ, config.frequency_uhz)
        _U8.pack_into(mm, ly.HDR_MODE, int(config.mode))
        _U8.pack_into(mm, ly.HDR_STATUS, int(Status.INITIALIZING))
        _U32.pack_into(mm, ly.HDR_HISTORY_CAPACITY, config.history_capacity)
        _U32.pack_into(mm, ly.HDR_PAYLOAD_CAPACITY, config.payload_capacity)
        _U32.pack_into(mm, ly.HDR_COMMAND_RING_CAPACITY, config.command_ring_capacity)
        _U64.pack_into(mm, ly.HDR_OWNER_PID, os.getpid())
        for i in range(config.command_ring_capacity):
            _U64.pack_into(mm, lay.command_slot_offset(i) + ly.CMD_SEQ, i)
        while True:
            try:
                os.link(tmp, path)
                break
            except FileExistsError:
                existing = None
                try:
                    existing = os.open(path, os.O_RDWR)
                except FileNotFoundError:
                    continue  # raced with someone else's reclaim
                try:
                    if _segment_is_live(existing):
                        raise AlreadyExists(f"segment {config.segment_id!r} is alive")
                finally:
                    os.close(existing)
                try:
                    os.unlink(path)  # stale leftover from a dead or stopped owner
                except FileNotFoundError:
                    pass
        return Segment(path, fd, mm, lay, owner=True)
    except AlreadyExists:
        if mm is not None:
            mm.close()
        os.close(fd)
        raise
    except OSError as e:
        if mm is not None:
            mm.close()
        os.close(fd)
        raise ResourceFailure(f"segment creation failed: {e}") from e
    finally:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass


def attach_segment(segment_id: str) -> Segment:
    """Map an existing segment read/write after header validation."""
    path = shm_path(segment_id)
    try:
        fd = os.open(path, os.O_RDWR)
    except FileNotFoundError:
        raise NotFound(f"no segment named {segment_id!r}") from None
    except OSError as e:
        raise ResourceFailure(f"cannot open {path}: {e}") from e
    try:
        header = _read_exact(fd, 0, ly.HEADER_SIZE)
        if len(header) < ly.HEADER_SIZE or header[:8] != ly.MAGIC:
            raise CorruptHeader(f"{path} does not carry a segment header")
        (version,) = _U32.unpack_from(header, ly.HDR_VERSION)
        if version != ly.SEGMENT_VERSION:
            raise VersionMismatch(f"segment version {version}, library speaks {ly.SEGMENT_VERSION}")
        (ndof,) = _U32.unpack_from(header, ly.HDR_NDOF)
        (history,) = _U32.unpack_from(header, ly.HDR_HISTORY_CAPACITY)
        (payload,) = _U32.unpack_from(header, ly.HDR_PAYLOAD_CAPACITY)
        (ring,) = _U32.unpack_from(header, ly.HDR_COMMAND_RING_CAPACITY)
        lay = SegmentLayout(
            ndof=ndof, history_capacity=history,
            payload_capacity=payload, command_ring_capacity=ring,
        )
        if os.fstat(fd).st_size != lay.segment_size:
            raise CorruptHeader(
                f"{path}: size {os.fstat(fd).st_size} != expected {lay.segment_size}"
            )
        mm = mmap.mmap(fd, lay.segment_size)
        return Segment(path, fd, mm, lay, owner=False)
    except Exception:
        os.close(fd)
        raise
