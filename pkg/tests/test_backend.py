"""Backend loop semantics: dispatch, interpolation chaining, pacing, bursts."""

import os
import threading
import time

import pytest

from synchro80 import (
    ActiveCommand,
    Backend,
    BackendConfig,
    Command,
    Direct,
    Driver,
    Duration,
    IntegratorDriver,
    Iteration,
    Mode,
    MuscleDriver,
    QueuePolicy,
    embed_backend,
)
from synchro80.errors import DriverFailure
from synchro80.frontend import FrontendSession
from synchro80.interpolation import trajectory
from synchro80.model import Status


def unique_id(prefix="b"):
    return f"{prefix}-{os.urandom(4).hex()}"


def config(segment_id, **kw):
    defaults = dict(ndof=1, frequency_hz=500.0, history_capacity=4096,
                    payload_capacity=0, command_ring_capacity=64)
    defaults.update(kw)
    return BackendConfig(segment_id=segment_id, **defaults)


class HoldDriver(Driver):
    """Reports back whatever was last commanded; payload stays empty."""

    def __init__(self, ndof, initial=0.0):
        self.values = [initial] * ndof

    def set(self, control):
        self.values = list(control)

    def get(self):
        return list(self.values), b""


class RecordingDriver(Driver):
    """Counts calls so set/get ordering per iteration is checkable."""

    def __init__(self):
        self.calls = []
        self.gets = 0

    def set(self, control):
        self.calls.append("set")

    def get(self):
        self.gets += 1
        self.calls.append("get")
        return [float(self.gets)], b""


def test_embedded_step_advances_iteration():
    with embed_backend(config(unique_id()), HoldDriver(1)) as b:
        b.step(3)
        assert b.segment.iteration == 3
        b.step(0)
        assert b.segment.iteration == 3


def test_first_desired_comes_from_driver_get():
    with embed_backend(config(unique_id()), HoldDriver(1, initial=7.5)) as b:
        b.step(1)
        obs = b.segment.read_observation(0)
        assert obs.desired == (7.5,)
        assert obs.observed == (7.5,)


def test_setpoint_holds_with_empty_queues():
    with embed_backend(config(unique_id()), HoldDriver(1, initial=2.5)) as b:
        b.step(5)
        assert b.segment.read_observation(4).desired == (2.5,)


def test_queued_commands_chain_like_their_trajectories():
    # oracle: chain trajectory() expansions of the two commands
    period = 2_000_000
    first = trajectory(ActiveCommand(Command(0, 4.0, Iteration(2)), 0.0, -1, -period), period)
    second = trajectory(ActiveCommand(Command(0, 0.0, Iteration(2)), 4.0, 1, period), period)
    assert first + second == [2.0, 4.0, 2.0, 0.0]

    with embed_backend(config(unique_id()), HoldDriver(1)) as b:
        sess = FrontendSession(b.segment.segment_id)
        sess.add_command(0, 4.0, Iteration(2))
        sess.add_command(0, 0.0, Iteration(2))
        sess.pulse()
        b.step(4)
        got = [b.segment.read_observation(i).desired[0] for i in range(4)]
        assert got == first + second
        sess.close()


def test_overwrite_interrupts_active_and_purges_queue():
    with embed_backend(config(unique_id()), HoldDriver(1)) as b:
        sess = FrontendSession(b.segment.segment_id)
        sess.add_command(0, 10.0, Duration(1_000_000_000))  # 1000 s: never finishes naturally
        sess.add_command(0, 20.0, Duration(1_000_000_000))
        sess.pulse()
        b.step(2)
        assert b.segment.completed_count(0) == 0
        sess.add_command(0, 0.0, Direct(), QueuePolicy.OVERWRITE)
        sess.pulse()
        b.step(1)
        assert b.segment.read_observation(2).desired == (0.0,)
        assert b.segment.completed_count(0) == 3  # two purged plus the direct
        sess.close()


def test_completion_accounting_drains_to_enqueue_count():
    with embed_backend(config(unique_id(), ndof=2), HoldDriver(2)) as b:
        sess = FrontendSession(b.segment.segment_id)
        for d in (0, 1):
            sess.add_command(d, 1.0, Iteration(3))
            sess.add_command(d, 2.0, Direct())
        sess.pulse()
        b.step(10)
        for d in (0, 1):
            assert b.segment.enqueue_count(d) == 2
            assert b.segment.completed_count(d) == 2
        sess.close()


def test_observations_are_consecutive_and_logical_time_advances():
    with embed_backend(config(unique_id()), HoldDriver(1)) as b:
        b.step(7)
        period = b.segment.nominal_period_ns
        for i in range(7):
            obs = b.segment.read_observation(i)
            assert obs.iteration == i
            assert obs.logical_time_ns == i * period


def test_driver_set_precedes_get_and_observation_carries_that_get():
    driver = RecordingDriver()
    with embed_backend(config(unique_id()), driver) as b:
        b.step(3)
        # one pre-loop get seeds the desired vector, then set/get per iteration
        assert driver.calls == ["get", "set", "get", "set", "get", "set", "get"]
        for i in range(3):
            assert b.segment.read_observation(i).observed == (float(i + 2),)


def test_driver_failure_publishes_stopped():
    class ExplodingDriver(HoldDriver):
        def __init__(self):
            super().__init__(1)
            self.sets = 0

        def set(self, control):
            self.sets += 1
            if self.sets >= 3:
                raise RuntimeError("synthetic device fault")
            super().set(control)

    b = embed_backend(config(unique_id()), ExplodingDriver())
    try:
        with pytest.raises(DriverFailure):
            b.step(10)
        assert b.segment.status == Status.STOPPED
        assert b.segment.iteration == 2
    finally:
        b.destroy()


def test_stop_is_idempotent_and_publishes_stopped():
    b = embed_backend(config(unique_id()), HoldDriver(1))
    b.step(2)
    b.stop()
    assert b.segment.status == Status.STOPPED
    b.stop()
    b.destroy()
    b.destroy()


# -- bursting ---------------------------------------------------------------

def test_bursting_backend_runs_nothing_unrequested():
    cfg = config(unique_id(), mode=Mode.BURSTING)
    with embed_backend(cfg, HoldDriver(1)) as b:
        t = threading.Thread(target=b.run, daemon=True)
        t.start()
        time.sleep(1.0)
        assert b.segment.iteration == 0
        b.request_stop()
        t.join(timeout=5)


def test_burst_runs_exactly_the_requested_count():
    cfg = config(unique_id(), mode=Mode.BURSTING)
    with embed_backend(cfg, HoldDriver(1)) as b:
        t = threading.Thread(target=b.run, daemon=True)
        t.start()
        sess = FrontendSession(b.segment.segment_id)
        sess.burst(100, blocking=True, timeout=30.0)
        assert b.segment.iteration == 100
        b.request_stop()
        t.join(timeout=5)
        sess.close()


def test_serve_burst_entry_for_embedded_hosts():
    cfg = config(unique_id(), mode=Mode.BURSTING)
    with embed_backend(cfg, HoldDriver(1)) as b:
        sess = FrontendSession(b.segment.segment_id)
        sess.burst(5, blocking=False)
        served = b.serve_burst(timeout=5.0)
        assert served == 5
        assert b.segment.iteration == 5
        sess.close()


def test_concurrent_burst_requests_add_up():
    cfg = config(unique_id(), mode=Mode.BURSTING)
    with embed_backend(cfg, HoldDriver(1)) as b:
        t = threading.Thread(target=b.run, daemon=True)
        t.start()
        sessions = [FrontendSession(cfg.segment_id) for _ in range(2)]
        threads = [
            threading.Thread(target=lambda s=s, n=n: s.burst(n, blocking=True, timeout=30.0))
            for s, n in zip(sessions, (5, 7))
        ]
        for w in threads:
            w.start()
        for w in threads:
            w.join(timeout=30)
        assert b.segment.iteration == 12
        for s in sessions:
            s.close()
        b.request_stop()
        t.join(timeout=5)


def test_bursting_repeat_runs_are_bit_identical():
    def run_once():
        cfg = config(unique_id(), mode=Mode.BURSTING, ndof=2)
        driver = MuscleDriver(2, 1.0 / cfg.frequency_hz, tau=0.05)
        history = []
        with embed_backend(cfg, driver) as b:
            sess = FrontendSession(cfg.segment_id)
            for i, n in enumerate((3, 5, 2, 10, 7)):
                sess.add_command(0, float(i + 1), Iteration(4))
                sess.add_command(1, float(-i), Duration(5_000))
                sess.pulse()
                sess.burst(n, blocking=False)
                b.serve_burst(timeout=5.0)
            for i in range(b.segment.iteration):
                obs = b.segment.read_observation(i)
                history.append((obs.iteration, obs.logical_time_ns, obs.desired, obs.observed))
            sess.close()
        return history

    first = run_once()
    second = run_once()
    assert len(first) == 27
    assert first == second


# -- normal-mode pacing (light check; the full criterion runs in acceptance) ----

def test_normal_pacing_tracks_absolute_deadlines():
    cfg = config(unique_id(), frequency_hz=250.0)
    b = Backend(cfg, IntegratorDriver(1, 1.0 / 250.0))
    t = threading.Thread(target=b.run, daemon=True)
    t.start()
    try:
        time.sleep(1.0)
        b.request_stop()
        t.join(timeout=5)
        n = b.segment.iteration
        assert 225 <= n <= 275, f"expected ~250 iterations, got {n}"
        first = b.segment.read_observation(0)
        last = b.segment.read_observation(n - 1)
        span = last.timestamp_ns - first.timestamp_ns
        ideal = (n - 1) * b.segment.nominal_period_ns
        assert abs(span - ideal) <= 0.10 * ideal, f"drift: span {span} vs ideal {ideal}"
    finally:
        b.destroy()
