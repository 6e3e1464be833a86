"""Control-loop engine: consumes commands, drives a device, publishes history.

A Backend owns exactly one segment. It can run its own loop (`run`, paced at
the configured frequency in NORMAL mode, demand-driven in BURSTING mode) or
be embedded in a host program that calls `step`/`serve_burst` itself. The
iteration body is strictly single-threaded.
"""

from __future__ import annotations

import signal
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DriverFailure
from .interpolation import ActiveCommand, desired_at
from .model import BackendConfig, Command, Mode, Observation, QueuePolicy, Status
from .segment import Segment, create_segment


class Driver:
    """Device the backend talks to once per iteration.

    set/get are called only between start and stop; get's payload must fit
    the segment's payload capacity.
    """

    def start(self) -> None:
        pass

    def stop(self) -> None:
        pass

    def set(self, control: Sequence[float]) -> None:
        raise NotImplementedError

    def get(self) -> tuple[Sequence[float], bytes]:
        raise NotImplementedError


@dataclass
class _DofState:
    current_desired: float
    active: ActiveCommand | None = None
    queue: deque = field(default_factory=deque)


class Backend:
    def __init__(self, config: BackendConfig, driver: Driver):
        self._config = config
        self._driver = driver
        self._seg = create_segment(config)
        self._period_ns = self._seg.nominal_period_ns
        self._stop = threading.Event()
        self._finalized = threading.Event()
        self._final_lock = threading.Lock()
        self._loop_running = threading.Event()
        try:
            driver.start()
        except Exception as e:
            self._seg.destroy()
            raise DriverFailure(f"driver start() raised: {e}") from e
        try:
            # the pre-loop sensor read seeds the desired vector so the first
            # iteration holds the device state instead of jumping to zero
            observed, _ = self._driver_get()
        except DriverFailure:
            try:
                driver.stop()
            except Exception:
                pass
            self._seg.destroy()
            raise
        self._dofs = [_DofState(current_desired=observed[d]) for d in range(config.ndof)]
        self._iteration = 0
        self._prev_timestamp_ns = 0
        self._seg.set_status(Status.RUNNING)

    @property
    def segment(self) -> Segment:
        return self._seg

    @property
    def iteration(self) -> int:
        return self._iteration

    # -- driver wrappers ---------------------------------------------------

    def _driver_get(self) -> tuple[list[float], bytes]:
        try:
            observed, payload = self._driver.get()
        except Exception as e:
            raise DriverFailure(f"driver get() raised: {e}") from e
        observed = list(observed)
        if len(observed) != self._config.ndof:
            raise DriverFailure(
                f"driver returned {len(observed)} observed values, expected {self._config.ndof}"
            )
        payload = bytes(payload)
        if len(payload) > self._config.payload_capacity:
            raise DriverFailure(
                f"driver payload of {len(payload)} bytes exceeds capacity"
                f" {self._config.payload_capacity}"
            )
        return observed, payload

    def _driver_set(self, desired: list[float]) -> None:
        try:
            self._driver.set(desired)
        except Exception as e:
            raise DriverFailure(f"driver set() raised: {e}") from e

    # -- iteration body ------------------------------------------------------

    def _iterate_once(self) -> Observation:
        seg = self._seg
        it = self._iteration
        period = self._period_ns

        # 1. drain the ring and dispatch to per-DOF queues
        for cmd in seg.pop_commands(seg.command_ring_capacity):
            ds = self._dofs[cmd.dof]
            if cmd.policy == QueuePolicy.OVERWRITE:
                purged = (1 if ds.active is not None else 0) + len(ds.queue)
                if purged:
                    # purged commands count completed at once so waiters move on
                    seg.add_completed(cmd.dof, purged)
                ds.active = None
                ds.queue.clear()
            ds.queue.append(cmd)

        # 2. activate and interpolate, one command at a time per DOF
        logical_ns = it * period
        desired = []
        for dof, ds in enumerate(self._dofs):
            if ds.active is None and ds.queue:
                head: Command = ds.queue.popleft()
                ds.active = ActiveCommand(
                    cmd=head,
                    start_state=ds.current_desired,
                    start_iteration=it - 1,
                    start_logical_ns=(it - 1) * period,
                )
            if ds.active is not None:
                value, done = desired_at(ds.active, it, logical_ns, period)
                ds.current_desired = value
                if done:
                    seg.add_completed(dof, 1)
                    ds.active = None
            desired.append(ds.current_desired)

        # 3-4. apply control, then sense
        self._driver_set(desired)
        observed, payload = self._driver_get()

        # 5. publish
        timestamp_ns = time.monotonic_ns()
        measured = 0 if it == 0 else timestamp_ns - self._prev_timestamp_ns
        self._prev_timestamp_ns = timestamp_ns
        obs = Observation(
            iteration=it,
            timestamp_ns=timestamp_ns,
            logical_time_ns=logical_ns,
            observed=tuple(observed),
            desired=tuple(desired),
            payload=payload,
            measured_period_ns=measured,
        )
        seg.write_observation(obs)
        self._iteration = it + 1
        return obs

    # -- embedded API --------------------------------------------------------

    def step(self, n: int) -> None:
        """Run n iterations synchronously in the caller's thread."""
        try:
            for _ in range(n):
                self._iterate_once()
        except DriverFailure:
            self._finalize()
            raise

    def serve_burst(self, timeout: float | None = None) -> int:
        """Wait for a burst request, run exactly the pending count, acknowledge.

        Returns the number of iterations run; 0 means a stop request arrived
        while waiting.
        """
        pending = self._seg.await_burst(timeout=timeout, stop=self._stop)
        if pending == 0:
            return 0
        self.step(pending)
        self._seg.complete_iterations(pending)
        return pending

    # -- loop ------------------------------------------------------------------

    def run(self) -> None:
        """Iterate until a stop request, pacing as the segment mode dictates."""
        self._loop_running.set()
        try:
            if self._config.mode == Mode.BURSTING:
                while not self._stop.is_set():
                    self.serve_burst()
            else:
                # absolute deadlines: oversleep never accumulates into drift,
                # missed deadlines execute immediately without skipping
                deadline = time.monotonic_ns()
                while not self._stop.is_set():
                    deadline += self._period_ns
                    while True:
                        now = time.monotonic_ns()
                        if now >= deadline:
                            break
                        time.sleep((deadline - now) / 1e9)
                    if self._stop.is_set():
                        break
                    self._iterate_once()
        finally:
            self._loop_running.clear()
            self._finalize()

    def request_stop(self) -> None:
        self._stop.set()

    def stop(self) -> None:
        """Signal the loop to exit after the current iteration and finalize."""
        self._stop.set()
        if self._loop_running.is_set():
            self._finalized.wait(timeout=10.0)
        else:
            self._finalize()

    def _finalize(self) -> None:
        with self._final_lock:
            if self._finalized.is_set():
                return
            self._seg.set_status(Status.STOPPED)
            try:
                self._driver.stop()
            except Exception:
                pass
            self._finalized.set()

    def destroy(self) -> None:
        self.stop()
        self._seg.destroy()

    def __enter__(self) -> "Backend":
        return self

    def __exit__(self, *exc) -> None:
        self.destroy()


def embed_backend(config: BackendConfig, driver: Driver) -> Backend:
    """Create the segment and loop state without spawning a loop."""
    return Backend(config, driver)


def run_backend(config: BackendConfig, driver: Driver, install_signal_handlers: bool = False) -> None:
    """Run a backend until stopped, then tear the segment down."""
    backend = Backend(config, driver)
    if install_signal_handlers:
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                signal.signal(sig, lambda *_: backend.request_stop())
            except ValueError:
                break  # not the main thread
    try:
        backend.run()
    finally:
        backend.destroy()


def stop_backend(backend: Backend) -> None:
    backend.stop()
