"""Recording data model, trial file format, touch segmentation and validation.

A recording holds one reach-to-grasp trial captured at 960 Hz from 12 rigidly
attached hand sensors plus three binary touch channels: S1 (hand at rest
position), S2 (object grasped), S3 (object placed on target). Sensor layout:

    0..4   fingertips            thumb, index, middle, ring, little
    5..9   proximal phalanges    same finger order
    10     thumb metacarpal
    11     middle finger metacarpal, rigid w.r.t. the palm (hand reference)
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

RATE_HZ = 960
NUM_SENSORS = 12
SENSOR_FINGERTIPS = (0, 1, 2, 3, 4)
SENSOR_PROXIMALS = (5, 6, 7, 8, 9)
SENSOR_THUMB_META = 10
SENSOR_HAND_REF = 11
COORD_LIMIT_MM = 10_000.0          # desk workspace sanity bound
TOUCH_DEBOUNCE_FRAMES = 3          # a touch state change must persist this long
MAX_TRIAL_DURATION_S = 5.0

REAL_OBJECTS = ("pen", "glue", "bottle", "rubiks_cube", "egg_vulcano", "toy", "scissors")
SHAPES = ("sphere", "box", "cylinder")
SIZES = ("small", "medium", "large")
SIZE_MM = {"small": 20.0, "medium": 40.0, "large": 60.0}

HEADER_MAGIC = "#GRSPREC"
FORMAT_VERSION = "v1"

COLUMN_HEADER = "frame,s1,s2,s3," + ",".join(
    f"p{i}{axis}" for i in range(NUM_SENSORS) for axis in "xyz"
)
NUM_COLUMNS = 4 + 3 * NUM_SENSORS


class RecordingError(ValueError):
    """Malformed recording file or inconsistent recording structure."""


class ExclusionReason(Enum):
    OK = "ok"
    TOUCH_ORDER_ERROR = "touch_order_error"
    EXCESSIVE_DURATION = "excessive_duration"
    MISSING_TOUCH = "missing_touch"


class SegmentationError(Exception):
    """Touch channels do not describe a usable reach-to-grasp trial."""

    def __init__(self, reason: ExclusionReason, message: str):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class ExclusionReport:
    excluded: bool
    reason: ExclusionReason


@dataclass(frozen=True)
class PhaseSegment:
    """Movement phase of one trial, in frame indices of the recording."""

    start_frame: int      # first frame with the hand off the rest sensor
    grasp_frame: int      # first frame with the object touched
    object_position: np.ndarray

    @property
    def num_frames(self) -> int:
        return self.grasp_frame - self.start_frame


@dataclass(frozen=True)
class ObjectLabel:
    """Identity of the grasped object, either an everyday item or a shape/size pair."""

    kind: str                    # "real" or "synthetic"
    name: str | None = None
    shape: str | None = None
    size: str | None = None

    def __post_init__(self):
        if self.kind == "real":
            if self.name not in REAL_OBJECTS:
                raise ValueError(f"unknown real object {self.name!r}")
            if self.shape is not None or self.size is not None:
                raise ValueError("real objects carry no shape/size")
        elif self.kind == "synthetic":
            if self.shape not in SHAPES or self.size not in SIZES:
                raise ValueError(f"bad synthetic object {self.shape!r}/{self.size!r}")
            if self.name is not None:
                raise ValueError("synthetic objects carry no name")
        else:
            raise ValueError(f"unknown object kind {self.kind!r}")

    @classmethod
    def real(cls, name: str) -> "ObjectLabel":
        return cls(kind="real", name=name)

    @classmethod
    def synthetic(cls, shape: str, size: str) -> "ObjectLabel":
        return cls(kind="synthetic", shape=shape, size=size)

    def to_token(self) -> str:
        if self.kind == "real":
            return f"real:{self.name}"
        return f"synthetic:{self.shape}:{self.size}"

    @classmethod
    def from_token(cls, token: str) -> "ObjectLabel":
        parts = token.split(":")
        if parts[0] == "real" and len(parts) == 2:
            return cls.real(parts[1])
        if parts[0] == "synthetic" and len(parts) == 3:
            return cls.synthetic(parts[1], parts[2])
        raise ValueError(f"bad object token {token!r}")

    @property
    def object_class(self) -> int:
        """Class index within the label's own object set."""
        if self.kind == "real":
            return REAL_OBJECTS.index(self.name)
        return SHAPES.index(self.shape) * len(SIZES) + SIZES.index(self.size)

    @property
    def size_class(self) -> int | None:
        return None if self.kind == "real" else SIZES.index(self.size)

    @property
    def shape_class(self) -> int | None:
        return None if self.kind == "real" else SHAPES.index(self.shape)

    @property
    def size_mm(self) -> float | None:
        return None if self.kind == "real" else SIZE_MM[self.size]


@dataclass(frozen=True)
class TrackingFrame:
    """One streamed sample: 12 sensor positions in mm plus touch states."""

    frame_index: int
    time_s: float
    positions: np.ndarray                 # (12, 3) mm
    touch: tuple[bool, bool, bool]        # S1, S2, S3


@dataclass(eq=False)
class Recording:
    """One trial: metadata plus per-frame sensor positions and touch states."""

    user_id: str
    session_id: str
    trial_id: str
    object_label: ObjectLabel
    object_position: np.ndarray           # (3,) mm
    rate_hz: int
    frame_index: np.ndarray               # (n,) strictly increasing
    touch: np.ndarray                     # (n, 3) bool
    positions: np.ndarray                 # (n, 12, 3) float64 mm

    def __post_init__(self):
        self.object_position = np.asarray(self.object_position, dtype=np.float64)
        self.frame_index = np.asarray(self.frame_index, dtype=np.int64)
        self.touch = np.asarray(self.touch, dtype=bool)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.validate_structure()

    def validate_structure(self):
        n = self.frame_index.shape[0]
        if n == 0:
            raise RecordingError("recording has no frames")
        if self.object_position.shape != (3,):
            raise RecordingError("object_position must be a 3-vector")
        if self.rate_hz <= 0:
            raise RecordingError(f"bad sample rate {self.rate_hz}")
        if self.touch.shape != (n, 3):
            raise RecordingError("touch shape does not match frame count")
        if self.positions.shape != (n, NUM_SENSORS, 3):
            raise RecordingError("positions shape does not match frame count")
        if n > 1 and not np.all(np.diff(self.frame_index) > 0):
            bad = int(np.flatnonzero(np.diff(self.frame_index) <= 0)[0])
            raise RecordingError(
                f"frame_index not strictly increasing at row {bad + 1}"
            )
        if not np.all(np.isfinite(self.positions)):
            raise RecordingError("non-finite sensor position")
        if np.any(np.abs(self.positions) > COORD_LIMIT_MM):
            raise RecordingError("sensor position outside plausible workspace")

    @property
    def num_frames(self) -> int:
        return self.frame_index.shape[0]

    @property
    def duration_s(self) -> float:
        return (int(self.frame_index[-1]) - int(self.frame_index[0])) / self.rate_hz

    def frames(self) -> Iterator[TrackingFrame]:
        """Yield frames in capture order, as a live stream would deliver them."""
        for i in range(self.num_frames):
            idx = int(self.frame_index[i])
            yield TrackingFrame(
                frame_index=idx,
                time_s=idx / self.rate_hz,
                positions=self.positions[i],
                touch=(bool(self.touch[i, 0]), bool(self.touch[i, 1]), bool(self.touch[i, 2])),
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.user_id == other.user_id
            and self.session_id == other.session_id
            and self.trial_id == other.trial_id
            and self.object_label == other.object_label
            and self.rate_hz == other.rate_hz
            and np.array_equal(self.object_position, other.object_position)
            and np.array_equal(self.frame_index, other.frame_index)
            and np.array_equal(self.touch, other.touch)
            and np.array_equal(self.positions, other.positions)
        )


def write_recording(recording: Recording) -> str:
    """Serialize a recording to its canonical text form (LF endings, 4 decimals)."""
    out = io.StringIO()
    meta = recording
    pos = meta.object_position
    out.write(
        f"{HEADER_MAGIC} {FORMAT_VERSION}"
        f" user={meta.user_id} session={meta.session_id} trial={meta.trial_id}"
        f" object={meta.object_label.to_token()} rate={meta.rate_hz}"
        f" object_x={pos[0]:.4f} object_y={pos[1]:.4f} object_z={pos[2]:.4f}\n"
    )
    out.write(COLUMN_HEADER + "\n")
    touch = recording.touch.astype(int)
    for i in range(recording.num_frames):
        coords = ",".join(f"{v:.4f}" for v in recording.positions[i].ravel())
        out.write(
            f"{int(recording.frame_index[i])},"
            f"{touch[i, 0]},{touch[i, 1]},{touch[i, 2]},{coords}\n"
        )
    return out.getvalue()


def _parse_header(line: str) -> dict:
    tokens = line.strip().split(" ")
    if len(tokens) < 2 or tokens[0] != HEADER_MAGIC:
        raise RecordingError(f"line 1: missing {HEADER_MAGIC} header")
    if tokens[1] != FORMAT_VERSION:
        raise RecordingError(f"line 1: unsupported format version {tokens[1]!r}")
    fields = {}
    for tok in tokens[2:]:
        if "=" not in tok:
            raise RecordingError(f"line 1: malformed header field {tok!r}")
        key, value = tok.split("=", 1)
        if key in fields:
            raise RecordingError(f"line 1: duplicate header field {key!r}")
        fields[key] = value
    required = ("user", "session", "trial", "object", "rate",
                "object_x", "object_y", "object_z")
    for key in required:
        if key not in fields:
            raise RecordingError(f"line 1: missing header field {key!r}")
    unknown = set(fields) - set(required)
    if unknown:
        raise RecordingError(f"line 1: unknown header field {sorted(unknown)[0]!r}")
    return fields


def parse_recording(text: str) -> Recording:
    """Parse the canonical trial text format, reporting the line of any defect."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 3:
        raise RecordingError("file truncated: need header, column row and data")

    fields = _parse_header(lines[0])
    if lines[1].strip() != COLUMN_HEADER:
        raise RecordingError("line 2: unexpected column header")

    try:
        label = ObjectLabel.from_token(fields["object"])
    except ValueError as exc:
        raise RecordingError(f"line 1: {exc}") from None
    try:
        rate = int(fields["rate"])
        object_position = np.array(
            [float(fields["object_x"]), float(fields["object_y"]), float(fields["object_z"])]
        )
    except ValueError:
        raise RecordingError("line 1: non-numeric rate or object position") from None
    if rate != RATE_HZ:
        raise RecordingError(f"line 1: unsupported rate {rate}")

    body = "\n".join(lines[2:])
    try:
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        if data.shape[1] != NUM_COLUMNS:
            raise ValueError("wrong column count")
    except ValueError:
        _parse_rows_strict(lines[2:])           # recover the offending line number
        raise RecordingError("unreadable data section") from None

    frame_index = data[:, 0]
    if np.any(frame_index != np.round(frame_index)):
        bad = int(np.flatnonzero(frame_index != np.round(frame_index))[0])
        raise RecordingError(f"line {bad + 3}: non-integer frame index")
    touch = data[:, 1:4]
    if np.any((touch != 0.0) & (touch != 1.0)):
        bad = int(np.flatnonzero(np.any((touch != 0.0) & (touch != 1.0), axis=1))[0])
        raise RecordingError(f"line {bad + 3}: touch values must be 0 or 1")
    if data.shape[0] > 1:
        steps = np.diff(frame_index)
        if np.any(steps <= 0):
            bad = int(np.flatnonzero(steps <= 0)[0])
            raise RecordingError(f"line {bad + 4}: frame index not strictly increasing")

    positions = data[:, 4:].reshape(-1, NUM_SENSORS, 3)
    try:
        return Recording(
            user_id=fields["user"],
            session_id=fields["session"],
            trial_id=fields["trial"],
            object_label=label,
            object_position=object_position,
            rate_hz=rate,
            frame_index=frame_index.astype(np.int64),
            touch=touch.astype(bool),
            positions=positions,
        )
    except RecordingError as exc:
        raise RecordingError(f"data section: {exc}") from None


def _parse_rows_strict(rows: list[str]):
    """Slow row-by-row parse used only to name the first bad line."""
    for i, row in enumerate(rows):
        line_no = i + 3
        parts = row.strip().split(",")
        if len(parts) != NUM_COLUMNS:
            raise RecordingError(
                f"line {line_no}: expected {NUM_COLUMNS} columns, got {len(parts)}"
            )
        for part in parts:
            try:
                float(part)
            except ValueError:
                raise RecordingError(
                    f"line {line_no}: non-numeric field {part!r}"
                ) from None


def read_recording_file(path) -> Recording:
    with open(path, "r", encoding="ascii", newline="") as fh:
        return parse_recording(fh.read())


def write_recording_file(recording: Recording, path):
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(write_recording(recording))


def _debounced_runs(states: np.ndarray) -> list[tuple[int, bool]]:
    """Run-length encode a boolean channel, keeping only runs that persist.

    Runs shorter than TOUCH_DEBOUNCE_FRAMES are contact chatter and are
    dropped; the surviving runs are returned as (start_row, value) with
    consecutive equal values merged.
    """
    n = states.shape[0]
    edges = np.flatnonzero(np.diff(states.astype(np.int8))) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [n]))
    accepted: list[tuple[int, bool]] = []
    for s, e in zip(starts, ends):
        if e - s < TOUCH_DEBOUNCE_FRAMES:
            continue
        value = bool(states[s])
        if accepted and accepted[-1][1] == value:
            continue
        accepted.append((int(s), value))
    return accepted


def segment_r2g(recording: Recording) -> PhaseSegment:
    """Locate the reach-to-grasp phase from the S1/S2 touch channels.

    The movement starts when S1 releases after having been held and ends when
    S2 first fires. Raises SegmentationError when the channels contradict that
    order or one event never happens.
    """
    s1_runs = _debounced_runs(recording.touch[:, 0])
    s2_runs = _debounced_runs(recording.touch[:, 1])

    s1_release_row = None
    seen_held = False
    for row, value in s1_runs:
        if value:
            seen_held = True
        elif seen_held:
            s1_release_row = row
            break
    s2_row = next((row for row, value in s2_runs if value), None)

    if seen_held and s2_row is not None and (
        s1_release_row is None or s2_row <= s1_release_row
    ):
        raise SegmentationError(
            ExclusionReason.TOUCH_ORDER_ERROR,
            "object touched before the hand left the rest position",
        )
    if s1_release_row is None or s2_row is None:
        raise SegmentationError(
            ExclusionReason.MISSING_TOUCH,
            "rest release or object touch never observed",
        )
    return PhaseSegment(
        start_frame=int(recording.frame_index[s1_release_row]),
        grasp_frame=int(recording.frame_index[s2_row]),
        object_position=recording.object_position.copy(),
    )


def validate_recording(
    recording: Recording, max_duration_s: float = MAX_TRIAL_DURATION_S
) -> ExclusionReport:
    """Decide whether a trial enters the dataset, mirroring manual curation rules."""
    try:
        segment = segment_r2g(recording)
    except SegmentationError as exc:
        return ExclusionReport(excluded=True, reason=exc.reason)
    duration = segment.num_frames / recording.rate_hz
    if duration > max_duration_s:
        return ExclusionReport(excluded=True, reason=ExclusionReason.EXCESSIVE_DURATION)
    return ExclusionReport(excluded=False, reason=ExclusionReason.OK)
