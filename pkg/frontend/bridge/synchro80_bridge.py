#!/usr/bin/env python3
"""JSON-lines stdio bridge hosting the synchro80 package for foreign clients.

One request per line on stdin: {"id": n, "method": str, "params": {...}}.
One response per line on stdout: {"id": n, "result": ...} or
{"id": n, "error": {"type": <exception class name>, "message": str, "data": {...}}}.

Each request runs on its own thread so blocking calls (pulse_and_wait,
wait_for_iteration, blocking bursts) never stall unrelated traffic; calls
that share one session or backend object are serialized per object. On
stdin EOF every hosted backend is destroyed so no segment leaks.
"""

import itertools
import json
import sys
import threading
import traceback

import synchro80
from synchro80 import (
    Backend,
    BackendConfig,
    Direct,
    Duration,
    FrontendSession,
    Iteration,
    Mode,
    QueuePolicy,
    Speed,
    run_hysr_demo,
)
from synchro80.drivers import build_driver
from synchro80.errors import Synchro80Error

_out_lock = threading.Lock()
_ids = itertools.count(1)
_sessions = {}
_backends = {}
_serve_threads = {}
_object_locks = {}
_shutdown = threading.Event()


def _send(obj):
    with _out_lock:
        sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
        sys.stdout.flush()


def _mode_from(spec):
    kind = spec["kind"]
    if kind == "direct":
        return Direct()
    if kind == "duration":
        return Duration(int(spec["duration_us"]))
    if kind == "speed":
        return Speed(float(spec["speed"]))
    if kind == "iteration":
        return Iteration(int(spec["count"]))
    raise ValueError(f"unknown interpolation mode kind {kind!r}")


def _ticket_json(t):
    return {"dof": t.dof, "position": t.position}


def _obs_json(obs):
    return {
        "iteration": obs.iteration,
        "timestamp_ns": obs.timestamp_ns,
        "logical_time_ns": obs.logical_time_ns,
        "observed": list(obs.observed),
        "desired": list(obs.desired),
        "payload_hex": obs.payload.hex(),
        "measured_period_ns": obs.measured_period_ns,
    }


def _session(params):
    return _sessions[params["session"]]


def _backend(params):
    return _backends[params["backend"]]


def op_hello(params):
    return {
        "package_version": synchro80.__version__,
        "segment_version": synchro80.SEGMENT_VERSION,
    }


def op_attach(params):
    session = FrontendSession(params["segment_id"])
    handle = next(_ids)
    _sessions[handle] = session
    _object_locks[("s", handle)] = threading.Lock()
    seg = session.segment
    return {
        "session": handle,
        "ndof": seg.ndof,
        "frequency_hz": seg.frequency_hz,
        "mode": seg.mode.name.lower(),
        "history_capacity": seg.history_capacity,
        "payload_capacity": seg.payload_capacity,
        "command_ring_capacity": seg.command_ring_capacity,
    }


def op_add_command(params):
    policy = QueuePolicy.OVERWRITE if params.get("policy") == "overwrite" else QueuePolicy.APPEND
    _session(params).add_command(
        int(params["dof"]), float(params["target"]), _mode_from(params["mode"]), policy
    )
    return None


def op_pulse(params):
    return [_ticket_json(t) for t in _session(params).pulse()]


def op_pulse_and_wait(params):
    _session(params).pulse_and_wait(timeout=params.get("timeout"))
    return None


def op_latest(params):
    return _obs_json(_session(params).latest())


def op_read(params):
    return _obs_json(_session(params).read(int(params["iteration"])))


def op_wait_for_iteration(params):
    obs = _session(params).wait_for_iteration(
        int(params["iteration"]), timeout=params.get("timeout")
    )
    return _obs_json(obs)


def op_burst(params):
    _session(params).burst(
        int(params["n"]),
        blocking=bool(params.get("blocking", True)),
        timeout=params.get("timeout"),
    )
    return None


def op_iteration(params):
    return _session(params).iteration


def op_close_session(params):
    handle = params["session"]
    _sessions.pop(handle).close()
    _object_locks.pop(("s", handle), None)
    return None


def op_embed(params):
    cfg = params["config"]
    config = BackendConfig(
        segment_id=cfg["segment_id"],
        ndof=int(cfg["ndof"]),
        frequency_hz=float(cfg["frequency_hz"]),
        mode=Mode.BURSTING if cfg.get("mode") == "bursting" else Mode.NORMAL,
        history_capacity=int(cfg.get("history_capacity", 4096)),
        payload_capacity=int(cfg.get("payload_capacity", 0)),
        command_ring_capacity=int(cfg.get("command_ring_capacity", 1024)),
    )
    driver_spec = params.get("driver", {"name": "integrator"})
    driver = build_driver(driver_spec.get("name", "integrator"),
                          driver_spec.get("params", {}), config)
    backend = Backend(config, driver)
    handle = next(_ids)
    _backends[handle] = backend
    _object_locks[("b", handle)] = threading.Lock()
    return {"backend": handle, "segment_id": config.segment_id}


def op_step(params):
    _backend(params).step(int(params["n"]))
    return None


def op_serve_start(params):
    backend = _backend(params)
    thread = threading.Thread(target=backend.run, daemon=True)
    thread.start()
    _serve_threads[params["backend"]] = thread
    return None


def op_backend_iteration(params):
    return _backend(params).segment.iteration


def op_backend_stop(params):
    backend = _backend(params)
    backend.request_stop()
    thread = _serve_threads.pop(params["backend"], None)
    if thread is not None:
        thread.join(timeout=10)
    backend.stop()
    return None


def op_backend_destroy(params):
    handle = params["backend"]
    backend = _backends.pop(handle)
    backend.request_stop()
    thread = _serve_threads.pop(handle, None)
    if thread is not None:
        thread.join(timeout=10)
    backend.destroy()
    _object_locks.pop(("b", handle), None)
    return None


def op_run_hysr_demo(params):
    report = run_hysr_demo(
        float(params.get("duration_s", 2.0)),
        real_hz=float(params.get("real_hz", 500.0)),
        env_hz=float(params.get("env_hz", 100.0)),
        sim_steps_per_env_step=int(params.get("sim_steps_per_env_step", 5)),
        ndof=int(params.get("ndof", 2)),
        enable_sim=bool(params.get("enable_sim", True)),
        lockstep=bool(params.get("lockstep", False)),
    )
    stats = dict(line.split("=", 1) for line in report.stats_lines())
    return {"summary": report.summary_text(), "stats": stats}


def op_shutdown(params):
    _shutdown.set()
    return None


HANDLERS = {
    "hello": op_hello,
    "attach": op_attach,
    "add_command": op_add_command,
    "pulse": op_pulse,
    "pulse_and_wait": op_pulse_and_wait,
    "latest": op_latest,
    "read": op_read,
    "wait_for_iteration": op_wait_for_iteration,
    "burst": op_burst,
    "iteration": op_iteration,
    "close_session": op_close_session,
    "embed": op_embed,
    "step": op_step,
    "serve_start": op_serve_start,
    "backend_iteration": op_backend_iteration,
    "backend_stop": op_backend_stop,
    "backend_destroy": op_backend_destroy,
    "run_hysr_demo": op_run_hysr_demo,
    "shutdown": op_shutdown,
}

_SERIALIZED = {
    "add_command", "pulse", "pulse_and_wait", "latest", "read",
    "wait_for_iteration", "burst", "iteration",
    "step", "backend_iteration",
}


def _object_lock(method, params):
    if method not in _SERIALIZED:
        return None
    if "session" in params:
        return _object_locks.get(("s", params["session"]))
    if "backend" in params:
        return _object_locks.get(("b", params["backend"]))
    return None


def _handle(request):
    request_id = request.get("id")
    method = request.get("method")
    params = request.get("params") or {}
    try:
        handler = HANDLERS[method]
    except KeyError:
        _send({"id": request_id,
               "error": {"type": "UnknownMethod", "message": f"no method {method!r}"}})
        return
    try:
        lock = _object_lock(method, params)
        if lock is not None:
            with lock:
                result = handler(params)
        else:
            result = handler(params)
        _send({"id": request_id, "result": result})
    except Synchro80Error as e:
        data = {}
        if hasattr(e, "unsent"):
            data["unsent"] = e.unsent
            data["sent_tickets"] = [_ticket_json(t) for t in e.sent_tickets]
        _send({"id": request_id,
               "error": {"type": type(e).__name__, "message": str(e), "data": data}})
    except (KeyError, ValueError, TypeError) as e:
        _send({"id": request_id,
               "error": {"type": "BadRequest", "message": f"{type(e).__name__}: {e}"}})
    except Exception as e:  # internal fault: report, keep serving
        _send({"id": request_id,
               "error": {"type": "InternalError",
                         "message": f"{e}\n{traceback.format_exc()}"}})


def _cleanup():
    for handle in list(_backends):
        try:
            op_backend_destroy({"backend": handle})
        except Exception:
            pass
    for handle in list(_sessions):
        try:
            op_close_session({"session": handle})
        except Exception:
            pass


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as e:
            _send({"id": None, "error": {"type": "BadRequest", "message": str(e)}})
            continue
        threading.Thread(target=_handle, args=(request,), daemon=True).start()
        if _shutdown.is_set():
            break
    _cleanup()


if __name__ == "__main__":
    main()
