"""Prediction task vocabulary shared by dataset construction, models and evaluation."""

from __future__ import annotations

from enum import Enum


class Task(Enum):
    """What the network predicts from a feature window."""

    DISTANCE = "distance"            # remaining hand-to-object distance, mm
    TIME = "time"                    # remaining time to grasp, ms
    MERGED = "merged"                # distance and time from one shared trunk
    OBJECT_REAL = "object_real"      # 7-way everyday object identity
    OBJECT_SYNTH = "object_synth"    # 9-way shape x size identity
    SIZE = "size"                    # 3-way object size
    SHAPE = "shape"                  # 3-way object shape

    @property
    def wire_id(self) -> int:
        return _WIRE_IDS[self]

    @property
    def is_classification(self) -> bool:
        return self in (Task.OBJECT_REAL, Task.OBJECT_SYNTH, Task.SIZE, Task.SHAPE)

    @property
    def output_dim(self) -> int:
        return _OUTPUT_DIMS[self]

    @property
    def default_hidden(self) -> int:
        # regression heads train well with the smaller trunk
        return 128 if self.is_classification else 64

    @property
    def output_names(self) -> tuple[str, ...]:
        return _OUTPUT_NAMES[self]

    @classmethod
    def from_wire_id(cls, wire_id: int) -> "Task":
        for task, wid in _WIRE_IDS.items():
            if wid == wire_id:
                return task
        raise ValueError(f"unknown task id {wire_id}")


_WIRE_IDS = {
    Task.DISTANCE: 0,
    Task.TIME: 1,
    Task.MERGED: 2,
    Task.OBJECT_REAL: 3,
    Task.OBJECT_SYNTH: 4,
    Task.SIZE: 5,
    Task.SHAPE: 6,
}

_OUTPUT_DIMS = {
    Task.DISTANCE: 1,
    Task.TIME: 1,
    Task.MERGED: 2,
    Task.OBJECT_REAL: 7,
    Task.OBJECT_SYNTH: 9,
    Task.SIZE: 3,
    Task.SHAPE: 3,
}

_OUTPUT_NAMES = {
    Task.DISTANCE: ("distance_mm",),
    Task.TIME: ("time_ms",),
    Task.MERGED: ("distance_mm", "time_ms"),
    Task.OBJECT_REAL: ("class",),
    Task.OBJECT_SYNTH: ("class",),
    Task.SIZE: ("class",),
    Task.SHAPE: ("class",),
}
