"""Desk-scale hybrid sim-and-real harness.

Topology: a pseudo-real muscle backend paced at `real_hz`, a bursting mirror
simulator embedded in this process and served by its own thread, and an
environment loop that every step reads the freshest real observation,
mirrors it into the simulator, bursts the simulator a fixed number of
iterations, and sends the next scripted pressure targets to the real side.
The environment loop paces itself on the real backend's iteration counter,
so at the defaults (500 Hz real, 100 Hz env) it wakes on every 5th real
iteration.

With `lockstep=True` the real side also runs in bursting mode and is stepped
by the environment loop, which makes entire runs bit-reproducible.
"""

from __future__ import annotations

import math
import multiprocessing
import os
import statistics
import threading
import time
from dataclasses import dataclass, field

from .backend import Backend, run_backend
from .drivers import MirrorSimDriver, MuscleDriver, ballistic_trajectory
from .errors import NotFound
from .frontend import FrontendSession
from .model import BackendConfig, Direct, Mode, QueuePolicy

BALL_RECORD_WIDTH = 6  # position + velocity


def default_pressure_script(step: int, ndof: int) -> tuple[float, ...]:
    """Deterministic slow pressure wave, one phase-shifted channel per DOF."""
    return tuple(0.5 + 0.4 * math.sin(2 * math.pi * step / 50 + d) for d in range(ndof))


@dataclass(frozen=True)
class PeriodStats:
    count: int
    mean_ns: float
    min_ns: int
    max_ns: int
    stdev_ns: float

    @staticmethod
    def from_samples(samples: list[int]) -> "PeriodStats":
        if not samples:
            return PeriodStats(0, 0.0, 0, 0, 0.0)
        return PeriodStats(
            count=len(samples),
            mean_ns=statistics.fmean(samples),
            min_ns=min(samples),
            max_ns=max(samples),
            stdev_ns=statistics.pstdev(samples) if len(samples) > 1 else 0.0,
        )


@dataclass(frozen=True)
class MirrorStep:
    env_step: int
    mirrored_iteration: int
    real_iteration_now: int
    lag: int
    mirrored: tuple[float, ...]
    sim_observed: tuple[float, ...] | None


@dataclass(frozen=True)
class SimRecord:
    iteration: int
    logical_time_ns: int
    desired: tuple[float, ...]
    observed: tuple[float, ...]


@dataclass
class HysrReport:
    duration_s: float
    real_hz: float
    env_hz: float
    sim_steps_per_env_step: int
    ndof: int
    lockstep: bool
    sim_enabled: bool
    env_steps: int = 0
    real_iterations: int = 0
    sim_iterations: int = 0
    wall_s: float = 0.0
    mirror_steps: list[MirrorStep] = field(default_factory=list)
    sim_history: list[SimRecord] = field(default_factory=list)
    real_period: PeriodStats = PeriodStats(0, 0.0, 0, 0, 0.0)
    env_step_mean_s: float = 0.0
    env_step_max_s: float = 0.0

    def mirror_exact(self) -> bool:
        return all(
            s.sim_observed is not None and s.sim_observed == s.mirrored
            for s in self.mirror_steps
        )

    def max_lag(self) -> int:
        return max((s.lag for s in self.mirror_steps), default=0)

    def stats_lines(self) -> list[str]:
        lines = [
            f"duration_s={self.duration_s}",
            f"real_hz={self.real_hz}",
            f"env_hz={self.env_hz}",
            f"sim_steps_per_env_step={self.sim_steps_per_env_step}",
            f"ndof={self.ndof}",
            f"lockstep={int(self.lockstep)}",
            f"sim_enabled={int(self.sim_enabled)}",
            f"env_steps={self.env_steps}",
            f"real_iterations={self.real_iterations}",
            f"sim_iterations={self.sim_iterations}",
            f"wall_s={self.wall_s:.6f}",
            f"mirror_exact={int(self.mirror_exact())}",
            f"mirror_lag_max={self.max_lag()}",
            f"real_period_count={self.real_period.count}",
            f"real_period_mean_ns={self.real_period.mean_ns:.1f}",
            f"real_period_min_ns={self.real_period.min_ns}",
            f"real_period_max_ns={self.real_period.max_ns}",
            f"real_period_stdev_ns={self.real_period.stdev_ns:.1f}",
            f"env_step_mean_s={self.env_step_mean_s:.6f}",
            f"env_step_max_s={self.env_step_max_s:.6f}",
        ]
        return lines

    def write_stats(self, path: str) -> None:
        with open(path, "w") as f:
            f.write("\n".join(self.stats_lines()) + "\n")

    def summary_text(self) -> str:
        freq = self.real_iterations / self.wall_s if self.wall_s else 0.0
        lines = [
            f"hysr demo: {self.env_steps} env steps in {self.wall_s:.3f} s"
            f" ({self.env_hz:.0f} Hz nominal)",
            f"real backend: {self.real_iterations} iterations"
            f" (~{freq:.1f} Hz achieved, {self.real_hz:.0f} Hz nominal)",
        ]
        if self.sim_enabled:
            lines.append(
                f"sim backend: {self.sim_iterations} iterations"
                f" ({self.sim_steps_per_env_step} per env step),"
                f" mirror bit-exact: {self.mirror_exact()},"
                f" max mirror lag: {self.max_lag()} real iterations"
            )
        lines.append(
            f"real period: mean {self.real_period.mean_ns / 1e6:.3f} ms,"
            f" min {self.real_period.min_ns / 1e6:.3f} ms,"
            f" max {self.real_period.max_ns / 1e6:.3f} ms,"
            f" stdev {self.real_period.stdev_ns / 1e6:.3f} ms"
        )
        return "\n".join(lines)


def _run_real_muscle_backend(config: BackendConfig, tau: float) -> None:
    driver = MuscleDriver(config.ndof, 1.0 / config.frequency_hz, tau=tau)
    run_backend(config, driver, install_signal_handlers=True)


def _attach_wait(segment_id: str, timeout: float) -> FrontendSession:
    deadline = time.monotonic() + timeout
    while True:
        try:
            return FrontendSession(segment_id)
        except NotFound:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.01)


def run_hysr_demo(
    duration_s: float,
    real_hz: float = 500.0,
    env_hz: float = 100.0,
    sim_steps_per_env_step: int = 5,
    ndof: int = 2,
    enable_sim: bool = True,
    lockstep: bool = False,
    pressure_script=None,
    muscle_tau: float = 0.1,
) -> HysrReport:
    ratio = real_hz / env_hz
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"real_hz/env_hz must be an integer, got {ratio}")
    ratio = round(ratio)
    env_steps = round(duration_s * env_hz)
    if pressure_script is None:
        pressure_script = default_pressure_script

    token = os.urandom(4).hex()
    real_id = f"hysr-real-{token}"
    sim_id = f"hysr-sim-{token}"
    real_config = BackendConfig(
        segment_id=real_id,
        ndof=ndof,
        frequency_hz=real_hz,
        mode=Mode.BURSTING if lockstep else Mode.NORMAL,
    )

    report = HysrReport(
        duration_s=duration_s,
        real_hz=real_hz,
        env_hz=env_hz,
        sim_steps_per_env_step=sim_steps_per_env_step,
        ndof=ndof,
        lockstep=lockstep,
        sim_enabled=enable_sim,
        env_steps=env_steps,
    )

    real_proc = None
    real_backend = None
    real_thread = None
    sim_backend = None
    sim_thread = None
    real_sess = sim_sess = None
    try:
        if lockstep:
            real_backend = Backend(real_config, MuscleDriver(ndof, 1.0 / real_hz, tau=muscle_tau))
            real_thread = threading.Thread(target=real_backend.run, daemon=True)
            real_thread.start()
        else:
            ctx = multiprocessing.get_context("spawn")
            real_proc = ctx.Process(
                target=_run_real_muscle_backend, args=(real_config, muscle_tau), daemon=True
            )
            real_proc.start()
        real_sess = _attach_wait(real_id, timeout=60.0)

        if enable_sim:
            records = ballistic_trajectory(
                count=env_steps * sim_steps_per_env_step + 1, dt=1.0 / real_hz
            )
            sim_driver = MirrorSimDriver(ndof, records)
            sim_config = BackendConfig(
                segment_id=sim_id,
                ndof=ndof,
                frequency_hz=real_hz,
                mode=Mode.BURSTING,
                payload_capacity=sim_driver.payload_size,
            )
            sim_backend = Backend(sim_config, sim_driver)
            sim_thread = threading.Thread(target=sim_backend.run, daemon=True)
            sim_thread.start()
            sim_sess = FrontendSession(sim_id)

        env_durations: list[float] = []
        wall_start = time.monotonic_ns()
        for k in range(env_steps):
            step_start = time.monotonic_ns()
            if lockstep:
                real_sess.burst(ratio, blocking=True, timeout=60.0)
                obs = real_sess.latest()
            else:
                obs = real_sess.wait_for_iteration((k + 1) * ratio - 1, timeout=60.0)
            mirrored = obs.observed
            sim_observed = None
            if enable_sim:
                for d in range(ndof):
                    sim_sess.add_command(d, mirrored[d], Direct(), QueuePolicy.OVERWRITE)
                sim_sess.pulse()
                sim_sess.burst(sim_steps_per_env_step, blocking=True, timeout=60.0)
                sim_observed = sim_sess.latest().observed
            real_now = real_sess.iteration - 1
            report.mirror_steps.append(
                MirrorStep(
                    env_step=k,
                    mirrored_iteration=obs.iteration,
                    real_iteration_now=real_now,
                    lag=real_now - obs.iteration,
                    mirrored=mirrored,
                    sim_observed=sim_observed,
                )
            )
            targets = pressure_script(k, ndof)
            for d in range(ndof):
                real_sess.add_command(d, targets[d], Direct(), QueuePolicy.OVERWRITE)
            real_sess.pulse()
            env_durations.append((time.monotonic_ns() - step_start) / 1e9)
        report.wall_s = (time.monotonic_ns() - wall_start) / 1e9

        report.real_iterations = real_sess.iteration
        if enable_sim:
            report.sim_iterations = sim_sess.iteration

        # period statistics over whatever still sits in the history window
        first = max(1, report.real_iterations - real_config.history_capacity + 1)
        samples = [
            real_sess.read(i).measured_period_ns for i in range(first, report.real_iterations)
        ]
        report.real_period = PeriodStats.from_samples(samples)
        if env_durations:
            report.env_step_mean_s = statistics.fmean(env_durations)
            report.env_step_max_s = max(env_durations)

        if enable_sim:
            report.sim_history = [
                SimRecord(o.iteration, o.logical_time_ns, o.desired, o.observed)
                for o in (sim_sess.read(i) for i in range(report.sim_iterations))
            ]
        return report
    finally:
        if sim_backend is not None:
            sim_backend.request_stop()
            if sim_thread is not None:
                sim_thread.join(timeout=10.0)
            sim_backend.destroy()
        if lockstep and real_backend is not None:
            real_backend.request_stop()
            if real_thread is not None:
                real_thread.join(timeout=10.0)
            real_backend.destroy()
        if real_proc is not None:
            real_proc.terminate()
            real_proc.join(timeout=10.0)
        if real_sess is not None:
            real_sess.close()
        if sim_sess is not None:
            sim_sess.close()
