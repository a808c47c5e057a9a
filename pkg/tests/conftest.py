"""Shared builders for hand-tracking test recordings."""

import numpy as np
import pytest

from reachcast import ObjectLabel, Recording

RATE = 960


def flat_positions(num_frames: int, value: float = 100.0) -> np.ndarray:
    """A perfectly still hand: every sensor parked at one point."""
    return np.full((num_frames, 12, 3), value)


def touch_pattern(num_frames: int, s1_until: int, s2_from: int) -> np.ndarray:
    """S1 held on [0, s1_until), S2 held from s2_from to the end."""
    touch = np.zeros((num_frames, 3), dtype=bool)
    touch[:s1_until, 0] = True
    touch[s2_from:, 1] = True
    return touch


def make_recording(
    positions: np.ndarray,
    touch: np.ndarray,
    object_position=(300.0, 0.0, 0.0),
    label: ObjectLabel | None = None,
    rate_hz: int = RATE,
    user_id: str = "u00",
    session_id: str = "s1",
    trial_id: str = "t0",
) -> Recording:
    n = positions.shape[0]
    return Recording(
        user_id=user_id,
        session_id=session_id,
        trial_id=trial_id,
        object_label=label or ObjectLabel(kind="synthetic", shape="sphere", size="medium"),
        object_position=np.asarray(object_position, dtype=np.float64),
        rate_hz=rate_hz,
        frame_index=np.arange(n, dtype=np.int64),
        touch=touch,
        positions=positions,
    )


def simple_recording(num_frames: int = 400, s1_until: int = 100, s2_from: int = 300) -> Recording:
    return make_recording(
        flat_positions(num_frames), touch_pattern(num_frames, s1_until, s2_from)
    )


@pytest.fixture(scope="session")
def sample_trial():
    """One deterministic synthetic trial shared across test modules."""
    from reachcast.synthgen import generate_trial, make_user_profile, synthetic_objects

    user = make_user_profile(0, 42)
    return generate_trial(user, synthetic_objects()[4], 7, noise_mm=0.3, dropout_p=0.01)


@pytest.fixture(scope="session")
def dropout_trial():
    """Noise-free trial with injected dropouts: the spike-repair oracle."""
    from reachcast.synthgen import generate_trial, make_user_profile, synthetic_objects

    user = make_user_profile(1, 42)
    return generate_trial(user, synthetic_objects()[7], 21, noise_mm=0.0, dropout_p=0.01)


@pytest.fixture(scope="session")
def small_corpus():
    """Three users x nine synthetic objects x one rep, no dropouts."""
    from reachcast import GenConfig, generate_corpus

    return list(generate_corpus(GenConfig(users=3, reps=1, object_set="synthetic", seed=11)))
