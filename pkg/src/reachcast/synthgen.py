"""Synthetic reach-to-grasp trial generator.

Trials follow the standard desk protocol: the hand rests on a marked spot,
moves to the object and grasps it. Movement duration comes from Fitts' law,
the transport path is a minimum-jerk trajectory, and the grip aperture opens
to a peak at 65% of the movement and closes onto the object. All randomness
is driven by explicit seeds so corpora are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .capture import (
    NUM_SENSORS,
    RATE_HZ,
    REAL_OBJECTS,
    SENSOR_HAND_REF,
    SHAPES,
    SIZES,
    SIZE_MM,
    ObjectLabel,
    Recording,
)

FITTS_A_S = 0.25
FITTS_B_S = 0.12
REST_APERTURE_MM = 15.0
APERTURE_PEAK_TAU = 0.65
CLOSING_SLACK_MM = 2.0             # fingers settle this far off the object surface
DEFAULT_NOISE_MM = 0.3
DEFAULT_REACH_DISTANCE_MM = 320.0
REST_DURATION_RANGE_S = (0.20, 0.35)
CONTACT_DURATION_S = 0.05
BASE_STANDOFF_MM = 80.0            # hand reference trails the fingertips by a palm length

# engaged fingertip bearings around the approach axis, thumb opposes index
_FINGER_BEARINGS = np.array([np.pi, 0.0, 0.45, 0.90, 1.35])
_CURL_DEPTH = 0.45                 # disengaged tips sit at this fraction of the standoff
_CURL_RADIUS = 0.30


@dataclass(frozen=True)
class UserProfile:
    """Per-user movement style, fixed across all of the user's trials."""

    user_id: str
    speed_scale: float               # multiplies the Fitts' law duration
    hand_scale: float                # scales palm and finger geometry
    grip_angle: float                # orientation of the grasp axis, radians
    aperture_margin_mm: float        # peak aperture overshoot beyond object size
    finger_spread_jitter: np.ndarray  # (5,) bearing offsets, thumb/index kept at 0
    curl_scale: float


@dataclass(frozen=True)
class SynthObject:
    label: ObjectLabel
    position: np.ndarray             # (3,) nominal mm
    width_mm: float

    @property
    def engaged_fingers(self) -> tuple[int, ...]:
        """Sensor indices of fingers that close on the object: 2, 3 or all 5."""
        if self.width_mm <= 25.0:
            return (0, 1)
        if self.width_mm <= 45.0:
            return (0, 1, 2)
        return (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class TrialSchedule:
    """Ground-truth timing of a generated trial, in clean frame indices."""

    rest_frames: int
    movement_frames: int
    contact_frames: int
    movement_time_s: float

    @property
    def start_frame(self) -> int:
        return self.rest_frames

    @property
    def grasp_frame(self) -> int:
        return self.rest_frames + self.movement_frames

    @property
    def total_frames(self) -> int:
        return self.rest_frames + self.movement_frames + self.contact_frames


@dataclass
class SynthTrial:
    recording: Recording             # with noise and dropouts applied
    clean: Recording                 # noise-free, no dropouts
    schedule: TrialSchedule
    deleted_frames: np.ndarray       # clean-frame indices removed as dropouts
    engaged_fingers: tuple[int, ...]

    @property
    def kept_frames(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.clean.num_frames), self.deleted_frames)


# everyday objects: grip width, grasp-axis rotation, hand-length tweak
_REAL_TEMPLATES = {
    "pen": (15.0, 0.90, 0.90),
    "scissors": (22.0, 0.55, 0.95),
    "glue": (32.0, 0.20, 1.00),
    "toy": (38.0, -0.30, 1.05),
    "egg_vulcano": (45.0, 0.10, 1.00),
    "rubiks_cube": (57.0, -0.50, 1.05),
    "bottle": (65.0, 0.00, 1.10),
}


def fitts_time(
    distance_mm: float,
    width_mm: float,
    a_s: float = FITTS_A_S,
    b_s: float = FITTS_B_S,
    speed_scale: float = 1.0,
) -> float:
    """Movement time in seconds for a reach of the given distance and target width."""
    if distance_mm <= 0 or width_mm <= 0:
        raise ValueError("distance and width must be positive")
    return speed_scale * (a_s + b_s * np.log2(2.0 * distance_mm / width_mm))


def min_jerk(t, duration: float, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Minimum-jerk point-to-point trajectory sampled at times t in [0, duration]."""
    t = np.asarray(t, dtype=np.float64)
    if duration <= 0:
        raise ValueError("duration must be positive")
    if np.any(t < 0) or np.any(t > duration):
        raise ValueError("t outside [0, duration]")
    tau = t / duration
    s = 10.0 * tau**3 - 15.0 * tau**4 + 6.0 * tau**5
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    return p0 + np.multiply.outer(s, p1 - p0)


def _smoothstep(u):
    return 10.0 * u**3 - 15.0 * u**4 + 6.0 * u**5


def aperture_profile(
    tau,
    object_size_mm: float,
    margin_mm: float = 20.0,
    rest_mm: float = REST_APERTURE_MM,
    peak_tau: float = APERTURE_PEAK_TAU,
) -> np.ndarray:
    """Grip aperture in mm over normalized movement time tau in [0, 1].

    Opens from the rest aperture to object size + margin at peak_tau, then
    closes to object size + 2 mm at contact. Both segments use quintic easing,
    so the profile is continuously differentiable with zero slope at the peak.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0) or np.any(tau > 1):
        raise ValueError("tau outside [0, 1]")
    peak = object_size_mm + margin_mm
    final = object_size_mm + CLOSING_SLACK_MM
    opening = rest_mm + (peak - rest_mm) * _smoothstep(np.minimum(tau, peak_tau) / peak_tau)
    closing_u = np.clip((tau - peak_tau) / (1.0 - peak_tau), 0.0, 1.0)
    return np.where(tau <= peak_tau, opening, peak + (final - peak) * _smoothstep(closing_u))


def make_user_profile(user_index: int, master_seed: int) -> UserProfile:
    """Deterministic style parameters for one simulated participant."""
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, user_index)))
    spread = rng.uniform(-0.08, 0.08, size=5)
    spread[0] = 0.0       # thumb and index define the aperture and stay exact
    spread[1] = 0.0
    return UserProfile(
        user_id=f"u{user_index:02d}",
        speed_scale=float(rng.uniform(0.85, 1.15)),
        hand_scale=float(rng.uniform(0.90, 1.10)),
        grip_angle=float(rng.uniform(-0.25, 0.25)),
        aperture_margin_mm=float(rng.uniform(18.0, 26.0)),
        finger_spread_jitter=spread,
        curl_scale=float(rng.uniform(0.90, 1.10)),
    )


def synthetic_objects(position=None) -> list[SynthObject]:
    """The 3 shapes x 3 sizes study set at a common nominal position."""
    position = _default_object_position(position)
    return [
        SynthObject(ObjectLabel.synthetic(shape, size), position.copy(), SIZE_MM[size])
        for shape in SHAPES
        for size in SIZES
    ]


def real_objects(position=None) -> list[SynthObject]:
    """The 7 everyday objects at a common nominal position."""
    position = _default_object_position(position)
    return [
        SynthObject(ObjectLabel.real(name), position.copy(), _REAL_TEMPLATES[name][0])
        for name in REAL_OBJECTS
    ]


def _default_object_position(position) -> np.ndarray:
    if position is None:
        return np.array([0.0, DEFAULT_REACH_DISTANCE_MM, 0.0])
    return np.asarray(position, dtype=np.float64)


def _rotate_about(axis: np.ndarray, v: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1.0 - c)


def plan_dropouts(num_frames: int, p: float, rng) -> np.ndarray:
    """Choose interior frames to delete, never two adjacent ones."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability {p} outside [0, 1)")
    rng = np.random.default_rng(rng)
    if p == 0.0 or num_frames < 3:
        return np.empty(0, dtype=np.int64)
    flagged = rng.random(num_frames) < p
    deleted = []
    last = -2
    for i in range(1, num_frames - 1):
        if flagged[i] and i - 1 != last:
            deleted.append(i)
            last = i
    return np.array(deleted, dtype=np.int64)


def _apply_dropouts(recording: Recording, deleted: np.ndarray) -> Recording:
    if deleted.size == 0:
        kept = np.arange(recording.num_frames)
    else:
        kept = np.setdiff1d(np.arange(recording.num_frames), deleted)
    # a receiver never learns a frame was lost, so the index stream stays gapless
    return Recording(
        user_id=recording.user_id,
        session_id=recording.session_id,
        trial_id=recording.trial_id,
        object_label=recording.object_label,
        object_position=recording.object_position.copy(),
        rate_hz=recording.rate_hz,
        frame_index=np.arange(kept.shape[0], dtype=np.int64),
        touch=recording.touch[kept].copy(),
        positions=recording.positions[kept].copy(),
    )


def inject_dropouts(recording: Recording, p: float, seed) -> Recording:
    """Simulate silent frame loss: delete interior frames and reindex."""
    deleted = plan_dropouts(recording.num_frames, p, seed)
    return _apply_dropouts(recording, deleted)


def generate_trial(
    user: UserProfile,
    obj: SynthObject,
    seed,
    *,
    rest_position=(0.0, 0.0, 0.0),
    rate_hz: int = RATE_HZ,
    noise_mm: float = DEFAULT_NOISE_MM,
    dropout_p: float = 0.0,
    session_id: str = "s1",
    trial_id: str | None = None,
) -> SynthTrial:
    """Generate one reach-to-grasp trial for a user and object."""
    rng = np.random.default_rng(seed)
    rest_position = np.asarray(rest_position, dtype=np.float64)

    # physical placement wobbles a little from trial to trial
    object_position = obj.position + np.append(rng.uniform(-5.0, 5.0, size=2), 0.0)
    start_position = rest_position + np.append(rng.uniform(-3.0, 3.0, size=2), 0.0)

    span = object_position - start_position
    reach = float(np.linalg.norm(span))
    if reach <= obj.width_mm:
        raise ValueError("infeasible geometry: rest position inside the object")
    approach = span / reach
    world_up = np.array([0.0, 0.0, 1.0])
    side = np.cross(approach, world_up)
    if np.linalg.norm(side) < 1e-9:
        side = np.array([1.0, 0.0, 0.0])
    side = side / np.linalg.norm(side)
    up = np.cross(side, approach)

    if obj.label.kind == "real":
        _, template_angle, reach_tweak = _REAL_TEMPLATES[obj.label.name]
    else:
        template_angle, reach_tweak = 0.0, 1.0
    grasp_axis = _rotate_about(approach, side, user.grip_angle + template_angle)
    standoff = BASE_STANDOFF_MM * user.hand_scale * reach_tweak

    rest_s = float(rng.uniform(*REST_DURATION_RANGE_S))
    movement_time = fitts_time(reach, obj.width_mm, speed_scale=user.speed_scale)
    movement_time *= float(rng.uniform(0.97, 1.03))
    schedule = TrialSchedule(
        rest_frames=int(round(rest_s * rate_hz)),
        movement_frames=max(int(round(movement_time * rate_hz)), 2),
        contact_frames=int(round(CONTACT_DURATION_S * rate_hz)),
        movement_time_s=movement_time,
    )

    n = schedule.total_frames
    tau = np.zeros(n)
    move = np.arange(schedule.movement_frames) / schedule.movement_frames
    tau[schedule.start_frame : schedule.grasp_frame] = move
    tau[schedule.grasp_frame :] = 1.0

    s = _smoothstep(tau)
    ref_target = object_position - standoff * approach
    ref = start_position + np.multiply.outer(s, ref_target - start_position)
    center = ref + standoff * approach
    aperture = aperture_profile(tau, obj.width_mm, margin_mm=user.aperture_margin_mm)

    bearings = _FINGER_BEARINGS + user.finger_spread_jitter
    engaged = obj.engaged_fingers
    positions = np.empty((n, NUM_SENSORS, 3))
    for finger in range(5):
        direction = _rotate_about(approach, grasp_axis, bearings[finger])
        if finger in engaged:
            tip = center + np.multiply.outer(aperture / 2.0, direction)
        else:
            tip = (
                ref
                + _CURL_DEPTH * standoff * approach
                + _CURL_RADIUS * standoff * user.curl_scale * direction
            )
        positions[:, finger, :] = tip
        positions[:, finger + 5, :] = ref + 0.55 * (tip - ref)
    positions[:, 10, :] = ref + 0.35 * (positions[:, 0, :] - ref)
    positions[:, SENSOR_HAND_REF, :] = ref

    touch = np.zeros((n, 3), dtype=bool)
    touch[: schedule.start_frame, 0] = True
    touch[schedule.grasp_frame :, 1] = True

    label_slug = obj.label.to_token().replace(":", "-")
    if trial_id is None:
        trial_id = f"{user.user_id}-{label_slug}-{session_id}"

    # recordings quantize to the trial file precision, so write/parse round-trips
    def _build(pos: np.ndarray) -> Recording:
        return Recording(
            user_id=user.user_id,
            session_id=session_id,
            trial_id=trial_id,
            object_label=obj.label,
            object_position=np.round(object_position, 4),
            rate_hz=rate_hz,
            frame_index=np.arange(n, dtype=np.int64),
            touch=touch.copy(),
            positions=np.round(pos, 4),
        )

    clean = _build(positions)
    noisy = positions if noise_mm == 0.0 else positions + rng.normal(0.0, noise_mm, positions.shape)
    deleted = plan_dropouts(n, dropout_p, rng)
    observed = _apply_dropouts(_build(noisy), deleted)

    return SynthTrial(
        recording=observed,
        clean=clean,
        schedule=schedule,
        deleted_frames=deleted,
        engaged_fingers=engaged,
    )


@dataclass(frozen=True)
class GenConfig:
    """Corpus-level generation settings."""

    users: int = 16
    reps: int = 3
    object_set: str = "synthetic"      # "real", "synthetic" or "both"
    seed: int = 0
    noise_mm: float = DEFAULT_NOISE_MM
    dropout_p: float = 0.0
    rate_hz: int = RATE_HZ

    def objects(self) -> list[SynthObject]:
        if self.object_set == "synthetic":
            return synthetic_objects()
        if self.object_set == "real":
            return real_objects()
        if self.object_set == "both":
            return synthetic_objects() + real_objects()
        raise ValueError(f"unknown object set {self.object_set!r}")


def generate_corpus(config: GenConfig) -> Iterator[SynthTrial]:
    """Yield every trial of the corpus lazily, in user/object/rep order.

    Each rep is one session, so every user contributes reps sessions of one
    trial per object. Trial seeds are spawned from the corpus seed, so any
    single trial can be regenerated without generating the rest.
    """
    objects = config.objects()
    for user_index in range(config.users):
        user = make_user_profile(user_index, config.seed)
        for obj_index, obj in enumerate(objects):
            for rep in range(config.reps):
                yield generate_trial(
                    user,
                    obj,
                    np.random.SeedSequence(
                        config.seed, spawn_key=(1, user_index, obj_index, rep)
                    ),
                    noise_mm=config.noise_mm,
                    dropout_p=config.dropout_p,
                    rate_hz=config.rate_hz,
                    session_id=f"s{rep + 1}",
                )


def corpus_size(config: GenConfig) -> int:
    return config.users * len(config.objects()) * config.reps
