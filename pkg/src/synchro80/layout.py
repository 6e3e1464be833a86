"""Byte layout of a segment: pure offset arithmetic, no I/O.

Everything is little-endian and 8-byte aligned. The layout is a pure
function of (ndof, history_capacity, payload_capacity, command_ring_capacity)
so independent processes and languages can map the same bytes. `offsets`
dumps the full table for conformance checks.
"""

from __future__ import annotations

from dataclasses import dataclass

MAGIC = b"SYNCH80\0"
SEGMENT_VERSION = 1

HEADER_SIZE = 128
COMMAND_SLOT_SIZE = 48

# (name, offset, size) of every fixed header field. Gaps are zero padding.
HEADER_FIELDS = (
    ("magic", 0, 8),
    ("version", 8, 4),
    ("ndof", 12, 4),
    ("frequency_uhz", 16, 8),
    ("mode", 24, 1),
    ("status", 25, 1),
    ("history_capacity", 28, 4),
    ("payload_capacity", 32, 4),
    ("command_ring_capacity", 36, 4),
    ("iteration", 40, 8),
    ("burst_requested", 48, 8),
    ("burst_completed", 56, 8),
    ("producer_exclusion_word", 64, 4),
    ("owner_pid", 72, 8),
    ("command_head", 80, 8),
)

HDR_MAGIC = 0
HDR_VERSION = 8
HDR_NDOF = 12
HDR_FREQUENCY_UHZ = 16
HDR_MODE = 24
HDR_STATUS = 25
HDR_HISTORY_CAPACITY = 28
HDR_PAYLOAD_CAPACITY = 32
HDR_COMMAND_RING_CAPACITY = 36
HDR_ITERATION = 40
HDR_BURST_REQUESTED = 48
HDR_BURST_COMPLETED = 56
HDR_PRODUCER_EXCLUSION = 64
HDR_OWNER_PID = 72
HDR_COMMAND_HEAD = 80

# command slot, relative offsets; the 40-byte payload after seq ends with
# 8 reserved bytes so the full slot is 48 bytes
CMD_FIELDS = (
    ("seq", 0, 8),
    ("dof", 8, 4),
    ("policy", 12, 1),
    ("mode_tag", 13, 1),
    ("mode_param", 16, 8),
    ("target", 24, 8),
    ("position", 32, 8),
)

CMD_SEQ = 0
CMD_DOF = 8
CMD_POLICY = 12
CMD_MODE_TAG = 13
CMD_MODE_PARAM = 16
CMD_TARGET = 24
CMD_POSITION = 32

MODE_TAG_DIRECT = 0
MODE_TAG_DURATION = 1
MODE_TAG_SPEED = 2
MODE_TAG_ITERATION = 3


def _pad8(n: int) -> int:
    return (n + 7) & ~7


@dataclass(frozen=True)
class SegmentLayout:
    ndof: int
    history_capacity: int
    payload_capacity: int
    command_ring_capacity: int

    @property
    def enqueue_counts_offset(self) -> int:
        return HEADER_SIZE

    @property
    def completed_counts_offset(self) -> int:
        return HEADER_SIZE + 8 * self.ndof

    @property
    def command_ring_offset(self) -> int:
        return HEADER_SIZE + 16 * self.ndof

    @property
    def observation_ring_offset(self) -> int:
        return self.command_ring_offset + COMMAND_SLOT_SIZE * self.command_ring_capacity

    # observation slot, relative offsets
    @property
    def obs_desired_offset(self) -> int:
        return 40

    @property
    def obs_observed_offset(self) -> int:
        return 40 + 8 * self.ndof

    @property
    def obs_payload_offset(self) -> int:
        return 40 + 16 * self.ndof

    @property
    def obs_seq_post_offset(self) -> int:
        return self.obs_payload_offset + _pad8(self.payload_capacity)

    @property
    def observation_slot_size(self) -> int:
        return self.obs_seq_post_offset + 8

    @property
    def segment_size(self) -> int:
        return self.observation_ring_offset + self.history_capacity * self.observation_slot_size

    def command_slot_offset(self, slot: int) -> int:
        return self.command_ring_offset + COMMAND_SLOT_SIZE * slot

    def observation_slot_offset(self, slot: int) -> int:
        return self.observation_ring_offset + self.observation_slot_size * slot

    def offsets(self) -> list[str]:
        """Stable text table of every field's byte offset, for conformance."""
        lines = [
            f"segment_size {self.segment_size}",
            f"header offset 0 size {HEADER_SIZE}",
        ]
        for name, off, size in HEADER_FIELDS:
            lines.append(f"header.{name} offset {off} size {size}")
        lines.append(f"enqueue_count offset {self.enqueue_counts_offset} size {8 * self.ndof}")
        lines.append(f"completed_count offset {self.completed_counts_offset} size {8 * self.ndof}")
        lines.append(
            f"command_ring offset {self.command_ring_offset}"
            f" slots {self.command_ring_capacity} slot_size {COMMAND_SLOT_SIZE}"
        )
        for name, off, size in CMD_FIELDS:
            lines.append(f"command_slot.{name} offset {off} size {size}")
        lines.append(
            f"observation_ring offset {self.observation_ring_offset}"
            f" slots {self.history_capacity} slot_size {self.observation_slot_size}"
        )
        obs_fields = (
            ("seq_pre", 0, 8),
            ("iteration", 8, 8),
            ("timestamp_ns", 16, 8),
            ("logical_time_ns", 24, 8),
            ("measured_period_ns", 32, 8),
            ("desired", self.obs_desired_offset, 8 * self.ndof),
            ("observed", self.obs_observed_offset, 8 * self.ndof),
            ("payload", self.obs_payload_offset, self.payload_capacity),
            ("seq_post", self.obs_seq_post_offset, 8),
        )
        for name, off, size in obs_fields:
            lines.append(f"observation_slot.{name} offset {off} size {size}")
        return lines
