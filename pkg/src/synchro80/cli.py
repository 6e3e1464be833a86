"""Operator CLI: launch backends, log and monitor segments, burst, dump offsets.

Config files are line-oriented `key = value` text; comments start with `#`.
Recognized keys are the BackendConfig fields plus `driver = <name>` and
`driver.<param> = <value>`. Exit codes: 0 ok, 2 bad config or arguments,
3 segment missing or conflicting, 4 driver failure, 5 log gaps, 6 burst on
a non-bursting segment.
"""

from __future__ import annotations

import argparse
import signal
import sys
import time

from .backend import Backend
from .drivers import build_driver
from .errors import (
    AlreadyExists,
    BadConfig,
    DriverFailure,
    Evicted,
    FormatError,
    NoObservationYet,
    NotBurstingMode,
    NotFound,
    PeerStopped,
    WaitTimeout,
)
from .frontend import FrontendSession
from .layout import SegmentLayout
from .model import BackendConfig, Mode, Status

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_NOT_FOUND = 3
EXIT_DRIVER_FAILURE = 4
EXIT_GAPS = 5
EXIT_NOT_BURSTING = 6

_CONFIG_KEYS = {
    "segment_id": str,
    "ndof": int,
    "frequency_hz": float,
    "history_capacity": int,
    "payload_capacity": int,
    "command_ring_capacity": int,
}


def parse_config_file(path: str, require_driver: bool = True):
    """Parse a config file into (BackendConfig, driver name, driver params)."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise BadConfig(f"cannot read config {path}: {e}") from e
    values: dict[str, object] = {}
    driver_name = None
    driver_params: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "driver":
            driver_name = value
        elif key.startswith("driver."):
            driver_params[key[len("driver."):]] = value
        elif key == "mode":
            lowered = value.lower()
            if lowered == "normal":
                values["mode"] = Mode.NORMAL
            elif lowered == "bursting":
                values["mode"] = Mode.BURSTING
            else:
                raise BadConfig(f"mode: expected normal or bursting, got {value!r}")
        elif key in _CONFIG_KEYS:
            caster = _CONFIG_KEYS[key]
            try:
                values[key] = caster(value)
            except ValueError:
                raise BadConfig(f"{key}: expected {caster.__name__}, got {value!r}") from None
        else:
            raise BadConfig(f"unknown config key {key!r}")
    for required in ("segment_id", "ndof", "frequency_hz"):
        if required not in values:
            raise BadConfig(f"missing required config key {required!r}")
    if require_driver and driver_name is None:
        raise BadConfig("missing required config key 'driver'")
    config = BackendConfig(**values)
    config.validate()
    return config, driver_name, driver_params


def _err(message: str) -> None:
    print(f"synchro80: {message}", file=sys.stderr)


def cmd_launch(config_path: str) -> int:
    try:
        config, driver_name, params = parse_config_file(config_path)
        driver = build_driver(driver_name, params, config)
    except (BadConfig, FormatError, FileNotFoundError, ValueError) as e:
        _err(f"bad config: {e}")
        return EXIT_BAD_CONFIG
    try:
        backend = Backend(config, driver)
    except AlreadyExists as e:
        _err(str(e))
        return EXIT_NOT_FOUND
    except BadConfig as e:
        _err(f"bad config: {e}")
        return EXIT_BAD_CONFIG
    except DriverFailure as e:
        _err(str(e))
        return EXIT_DRIVER_FAILURE
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: backend.request_stop())
    print(f"synchro80: backend {config.segment_id!r} running "
          f"({config.mode.name.lower()}, {config.frequency_hz:g} Hz, driver {driver_name})")
    try:
        backend.run()
    except DriverFailure as e:
        _err(str(e))
        return EXIT_DRIVER_FAILURE
    finally:
        backend.destroy()
    return EXIT_OK


def cmd_log(segment_id: str, out_path: str, from_: int | None, count: int | None) -> int:
    try:
        session = FrontendSession(segment_id)
    except NotFound as e:
        _err(str(e))
        return EXIT_NOT_FOUND
    seg = session.segment
    ndof = seg.ndof
    header = (
        ["iteration", "timestamp_ns", "logical_time_ns", "period_ns"]
        + [f"desired_{d}" for d in range(ndof)]
        + [f"observed_{d}" for d in range(ndof)]
        + ["payload_hex"]
    )
    start = seg.iteration if from_ is None else from_
    gap_total = 0
    written = 0
    iteration = start
    with open(out_path, "w") as out:
        out.write(",".join(header) + "\n")
        try:
            while count is None or written < count:
                try:
                    obs = session.wait_for_iteration(iteration)
                except Evicted:
                    oldest = max(0, seg.iteration - seg.history_capacity)
                    missed = oldest - iteration
                    gap_total += missed
                    _err(f"gap: iterations {iteration}..{oldest - 1} evicted ({missed} rows lost)")
                    iteration = oldest
                    continue
                except PeerStopped:
                    _err("backend stopped, closing log")
                    break
                row = [
                    str(obs.iteration),
                    str(obs.timestamp_ns),
                    str(obs.logical_time_ns),
                    str(obs.measured_period_ns),
                ]
                row += [repr(v) for v in obs.desired]
                row += [repr(v) for v in obs.observed]
                row.append(obs.payload.hex())
                out.write(",".join(row) + "\n")
                written += 1
                iteration += 1
        except KeyboardInterrupt:
            pass
    session.close()
    if gap_total:
        _err(f"{gap_total} iterations lost to eviction")
        return EXIT_GAPS
    return EXIT_OK


def cmd_monitor(segment_id: str, interval: float) -> int:
    try:
        session = FrontendSession(segment_id)
    except NotFound as e:
        _err(str(e))
        return EXIT_NOT_FOUND
    seg = session.segment
    prev_iteration = seg.iteration
    prev_time = time.monotonic()
    try:
        while True:
            time.sleep(interval)
            now = time.monotonic()
            iteration = seg.iteration
            status = seg.status
            freq = (iteration - prev_iteration) / (now - prev_time)
            prev_iteration, prev_time = iteration, now
            fields = [
                f"iteration={iteration}",
                f"status={status.name}",
                f"freq_hz={freq:.1f}",
                f"queue_depth={seg.queue_depth()}",
            ]
            try:
                obs = session.latest()
                for d in range(seg.ndof):
                    fields.append(f"dof{d}_desired={obs.desired[d]!r}")
                    fields.append(f"dof{d}_observed={obs.observed[d]!r}")
            except (NoObservationYet, Evicted):
                pass
            print(" ".join(fields), flush=True)
            if status == Status.STOPPED:
                return EXIT_OK
    except KeyboardInterrupt:
        return EXIT_OK
    finally:
        session.close()


def cmd_burst(segment_id: str, n: int) -> int:
    if n < 1:
        _err(f"burst size must be >= 1, got {n}")
        return EXIT_BAD_CONFIG
    try:
        session = FrontendSession(segment_id)
    except NotFound as e:
        _err(str(e))
        return EXIT_NOT_FOUND
    try:
        session.burst(n, blocking=True)
    except NotBurstingMode as e:
        _err(str(e))
        return EXIT_NOT_BURSTING
    except (PeerStopped, WaitTimeout) as e:
        _err(str(e))
        return EXIT_NOT_FOUND
    finally:
        session.close()
    return EXIT_OK


def cmd_offsets(config_path: str) -> int:
    try:
        config, _, _ = parse_config_file(config_path, require_driver=False)
    except BadConfig as e:
        _err(f"bad config: {e}")
        return EXIT_BAD_CONFIG
    lay = SegmentLayout(
        ndof=config.ndof,
        history_capacity=config.history_capacity,
        payload_capacity=config.payload_capacity,
        command_ring_capacity=config.command_ring_capacity,
    )
    for line in lay.offsets():
        print(line)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="synchro80",
        description="shared-memory control middleware: backends, logging, monitoring",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("launch", help="run a backend from a config file until interrupted")
    p.add_argument("config")

    p = sub.add_parser("log", help="tail a segment's observation history to CSV")
    p.add_argument("segment_id")
    p.add_argument("out")
    p.add_argument("--from", dest="from_", type=int, default=None, metavar="N",
                   help="first iteration to log (default: next one)")
    p.add_argument("--count", type=int, default=None, metavar="M",
                   help="stop after M rows (default: until interrupted)")

    p = sub.add_parser("monitor", help="print one status line per interval")
    p.add_argument("segment_id")
    p.add_argument("--interval", type=float, default=1.0, metavar="S")

    p = sub.add_parser("burst", help="run n iterations of a bursting backend")
    p.add_argument("segment_id")
    p.add_argument("n", type=int)

    p = sub.add_parser("offsets", help="print the byte offset table for a config")
    p.add_argument("config")

    args = parser.parse_args(argv)
    if args.cmd == "launch":
        return cmd_launch(args.config)
    if args.cmd == "log":
        return cmd_log(args.segment_id, args.out, args.from_, args.count)
    if args.cmd == "monitor":
        return cmd_monitor(args.segment_id, args.interval)
    if args.cmd == "burst":
        return cmd_burst(args.segment_id, args.n)
    return cmd_offsets(args.config)


def main_entry() -> None:
    sys.exit(main())
