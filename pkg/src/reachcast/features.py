"""Hand polygon features: per-finger offset vectors plus overall hand speed.

The feature vector describes finger configuration relative to the hand
reference sensor on the middle finger metacarpal, which makes it invariant to
where the hand is in the workspace. Three nested sets are supported:

    VH         hand speed only                              1 value
    VH_FP      + 5 fingertip offset vectors                 16 values
    VH_FP_PP   + 5 proximal phalanx offset vectors          31 values

Layout: [vh, fp0..fp4 (xyz each), pp0..pp4 (xyz each)], thumb first.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .capture import (
    SENSOR_FINGERTIPS,
    SENSOR_HAND_REF,
    SENSOR_PROXIMALS,
    PhaseSegment,
    Recording,
)
from .preprocessing import FirFilter, ProcessedSample, preprocess_recording

FULL_DIM = 31


class FeatureSet(Enum):
    VH = "vh"
    VH_FP = "vh_fp"
    VH_FP_PP = "vh_fp_pp"

    @property
    def dim(self) -> int:
        return {FeatureSet.VH: 1, FeatureSet.VH_FP: 16, FeatureSet.VH_FP_PP: 31}[self]

    @property
    def wire_id(self) -> int:
        return {FeatureSet.VH: 0, FeatureSet.VH_FP: 1, FeatureSet.VH_FP_PP: 2}[self]

    @classmethod
    def from_wire_id(cls, wire_id: int) -> "FeatureSet":
        for fs in cls:
            if fs.wire_id == wire_id:
                return fs
        raise ValueError(f"unknown feature set id {wire_id}")

    def select(self, full: np.ndarray) -> np.ndarray:
        """Slice the leading columns of full 31-wide features down to this set."""
        return full[..., : self.dim]


def polygon_vectors(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fingertip and proximal phalanx offsets from the hand reference, mm.

    positions is one frame of sensor data, shape (12, 3). Returns (fp, pp),
    each (5, 3) in thumb..little order.
    """
    positions = np.asarray(positions, dtype=np.float64)
    ref = positions[SENSOR_HAND_REF]
    fp = positions[list(SENSOR_FINGERTIPS)] - ref
    pp = positions[list(SENSOR_PROXIMALS)] - ref
    return fp, pp


def assemble_features(
    positions: np.ndarray, velocity: float, feature_set: FeatureSet = FeatureSet.VH_FP_PP
) -> np.ndarray:
    """Build one frame's feature vector from filtered positions and hand speed."""
    if feature_set is FeatureSet.VH:
        return np.array([velocity])
    fp, pp = polygon_vectors(positions)
    if feature_set is FeatureSet.VH_FP:
        return np.concatenate(([velocity], fp.ravel()))
    return np.concatenate(([velocity], fp.ravel(), pp.ravel()))


def features_from_sample(
    sample: ProcessedSample, feature_set: FeatureSet = FeatureSet.VH_FP_PP
) -> np.ndarray:
    return assemble_features(sample.positions, sample.velocity, feature_set)


def feature_matrix(positions: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """Vectorized full 31-wide features for a series, shape (m, 31)."""
    positions = np.asarray(positions, dtype=np.float64)
    ref = positions[:, SENSOR_HAND_REF, :]
    fp = positions[:, list(SENSOR_FINGERTIPS), :] - ref[:, None, :]
    pp = positions[:, list(SENSOR_PROXIMALS), :] - ref[:, None, :]
    m = positions.shape[0]
    return np.concatenate(
        [np.asarray(velocity, dtype=np.float64)[:, None], fp.reshape(m, 15), pp.reshape(m, 15)],
        axis=1,
    )


def grip_aperture(positions: np.ndarray) -> float:
    """Thumb-to-index fingertip distance in mm for one frame."""
    positions = np.asarray(positions, dtype=np.float64)
    return float(np.linalg.norm(positions[0] - positions[1]))


@dataclass
class TrialFeatures:
    """Preprocessed movement phase of one trial, ready for window slicing.

    Rows cover the filtered samples whose frame index falls in
    [start_frame, grasp_frame]; features are the full 31-wide layout and are
    sliced down per feature set at window-materialization time.
    """

    user_id: str
    session_id: str
    trial_id: str
    object_token: str
    object_class: int
    size_class: int
    shape_class: int
    object_position: np.ndarray      # (3,) mm
    rate_hz: int
    start_frame: int
    grasp_frame: int
    frame_index: np.ndarray          # (m,)
    features: np.ndarray             # (m, 31)
    ref_positions: np.ndarray        # (m, 3) raw hand reference, for distance labels

    @property
    def num_samples(self) -> int:
        return self.frame_index.shape[0]

    def distance_to_object_mm(self, row: int) -> float:
        return float(np.linalg.norm(self.ref_positions[row] - self.object_position))

    def time_to_grasp_ms(self, row: int) -> float:
        return (self.grasp_frame - int(self.frame_index[row])) / self.rate_hz * 1000.0


def extract_trial_features(
    recording: Recording,
    segment: PhaseSegment,
    fir: FirFilter | None = None,
) -> TrialFeatures:
    """Preprocess one recording and keep the movement-phase feature rows."""
    series = preprocess_recording(recording, fir=fir)
    keep = (series.frame_index >= segment.start_frame) & (
        series.frame_index <= segment.grasp_frame
    )
    label = recording.object_label
    return TrialFeatures(
        user_id=recording.user_id,
        session_id=recording.session_id,
        trial_id=recording.trial_id,
        object_token=label.to_token(),
        object_class=label.object_class,
        size_class=-1 if label.size_class is None else label.size_class,
        shape_class=-1 if label.shape_class is None else label.shape_class,
        object_position=recording.object_position.copy(),
        rate_hz=recording.rate_hz,
        start_frame=segment.start_frame,
        grasp_frame=segment.grasp_frame,
        frame_index=series.frame_index[keep].copy(),
        features=feature_matrix(series.positions[keep], series.velocity[keep]),
        ref_positions=series.raw_positions[keep][:, SENSOR_HAND_REF, :].copy(),
    )
