"""synchro80: shared-memory middleware synchronizing user code with device loops.

Backends drive a device at a fixed frequency (or in user-driven bursting
lockstep) and publish an observation history to shared memory; frontends
enqueue interpolating state commands and read that history asynchronously.
"""

from . import errors
from .backend import Backend, Driver, embed_backend, run_backend, stop_backend
from .drivers import (
    IntegratorDriver,
    MirrorSimDriver,
    MuscleDriver,
    ballistic_trajectory,
    replay_load,
    replay_record,
)
from .frontend import FrontendSession
from .hysr import HysrReport, run_hysr_demo
from .interpolation import ActiveCommand, desired_at, trajectory
from .layout import SEGMENT_VERSION, SegmentLayout
from .model import (
    BackendConfig,
    Command,
    Direct,
    Duration,
    InterpolationMode,
    Iteration,
    Mode,
    Observation,
    QueuePolicy,
    QueueTicket,
    Speed,
    State,
    Status,
    validate_command,
)
from .segment import Segment, attach_segment, create_segment

__version__ = "0.1.0"

__all__ = [
    "ActiveCommand",
    "Backend",
    "BackendConfig",
    "Command",
    "Direct",
    "Driver",
    "Duration",
    "FrontendSession",
    "HysrReport",
    "IntegratorDriver",
    "InterpolationMode",
    "Iteration",
    "MirrorSimDriver",
    "Mode",
    "MuscleDriver",
    "Observation",
    "QueuePolicy",
    "QueueTicket",
    "SEGMENT_VERSION",
    "Segment",
    "SegmentLayout",
    "Speed",
    "State",
    "Status",
    "attach_segment",
    "ballistic_trajectory",
    "create_segment",
    "desired_at",
    "embed_backend",
    "errors",
    "replay_load",
    "replay_record",
    "run_backend",
    "run_hysr_demo",
    "stop_backend",
    "trajectory",
    "validate_command",
    "__version__",
]
