"""Synthetic trial generator tests against its own ground-truth schedule."""

import numpy as np
import pytest

from reachcast.capture import parse_recording, segment_r2g, write_recording
from reachcast.features import grip_aperture
from reachcast.synthgen import (
    CLOSING_SLACK_MM,
    REST_APERTURE_MM,
    GenConfig,
    SynthObject,
    aperture_profile,
    corpus_size,
    fitts_time,
    generate_corpus,
    generate_trial,
    make_user_profile,
    min_jerk,
    plan_dropouts,
    synthetic_objects,
    real_objects,
)
from reachcast.capture import ObjectLabel


class TestFittsTime:
    def test_zero_bit_reach_takes_the_intercept_time(self):
        assert fitts_time(20.0, 40.0) == pytest.approx(0.25)
        assert fitts_time(20.0, 40.0, speed_scale=1.3) == pytest.approx(0.325)

    def test_reference_reach(self):
        assert fitts_time(320.0, 40.0) == pytest.approx(0.25 + 0.12 * 4)

    def test_doubling_distance_adds_one_bit(self):
        base = fitts_time(150.0, 30.0)
        assert fitts_time(300.0, 30.0) - base == pytest.approx(0.12)

    def test_rejects_nonpositive_geometry(self):
        with pytest.raises(ValueError):
            fitts_time(0.0, 40.0)
        with pytest.raises(ValueError):
            fitts_time(100.0, -1.0)


class TestMinJerk:
    def test_endpoints(self):
        p0, p1 = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0])
        assert np.array_equal(min_jerk(0.0, 2.0, p0, p1), p0)
        assert np.array_equal(min_jerk(2.0, 2.0, p0, p1), p1)

    def test_midpoint(self):
        p0, p1 = np.zeros(3), np.array([10.0, 0.0, 0.0])
        mid = min_jerk(1.0, 2.0, p0, p1)
        assert mid[0] == pytest.approx(5.0)

    def test_endpoint_velocity_vanishes(self):
        p0, p1 = np.zeros(3), np.array([100.0, 0.0, 0.0])
        for dt in (1e-2, 1e-3, 1e-4):
            step = np.linalg.norm(min_jerk(1.0, 1.0, p0, p1) - min_jerk(1.0 - dt, 1.0, p0, p1))
            assert step / dt < 100.0 * 10 * dt  # speed ~ O(dt^2) near the end

    def test_rejects_time_outside_duration(self):
        with pytest.raises(ValueError):
            min_jerk(-0.1, 1.0, np.zeros(3), np.ones(3))
        with pytest.raises(ValueError):
            min_jerk(1.1, 1.0, np.zeros(3), np.ones(3))

    def test_speed_profile_is_single_peaked(self):
        t = np.linspace(0.0, 1.0, 500)
        path = min_jerk(t, 1.0, np.zeros(3), np.array([200.0, 50.0, 0.0]))
        speed = np.linalg.norm(np.diff(path, axis=0), axis=1)
        rising = np.diff(speed) > 0
        assert np.sum(rising[:-1] & ~rising[1:]) == 1


class TestApertureProfile:
    def test_rest_value(self):
        assert aperture_profile(0.0, 40.0, margin_mm=20.0) == REST_APERTURE_MM

    def test_peak_value(self):
        assert aperture_profile(0.65, 40.0, margin_mm=20.0) == pytest.approx(60.0)

    def test_closing_value(self):
        assert aperture_profile(1.0, 40.0, margin_mm=20.0) == pytest.approx(40.0 + CLOSING_SLACK_MM)

    def test_opens_then_closes_smoothly(self):
        tau = np.linspace(0.0, 1.0, 1001)
        ap = aperture_profile(tau, 40.0, margin_mm=20.0)
        peak = int(np.argmax(ap))
        assert abs(tau[peak] - 0.65) < 0.01
        assert np.all(np.diff(ap[: peak + 1]) >= 0)
        assert np.all(np.diff(ap[peak:]) <= 0)
        assert np.max(np.abs(np.diff(ap))) < 0.5   # no jumps on a fine grid

    def test_rejects_tau_outside_unit_interval(self):
        with pytest.raises(ValueError):
            aperture_profile(1.5, 40.0)


class TestUserProfiles:
    def test_style_parameters_stay_in_band(self):
        for i in range(30):
            u = make_user_profile(i, 42)
            assert 0.7 <= u.speed_scale <= 1.4
            assert 0.85 <= u.hand_scale <= 1.15
            assert 15.0 <= u.aperture_margin_mm <= 30.0
            assert u.user_id == f"u{i:02d}"

    def test_deterministic_per_index_and_seed(self):
        a = make_user_profile(3, 42)
        b = make_user_profile(3, 42)
        c = make_user_profile(3, 43)
        assert a.speed_scale == b.speed_scale and a.hand_scale == b.hand_scale
        assert np.array_equal(a.finger_spread_jitter, b.finger_spread_jitter)
        assert a.speed_scale != c.speed_scale


class TestObjectCatalog:
    def test_study_set_is_three_shapes_by_three_sizes(self):
        objs = synthetic_objects()
        assert len(objs) == 9
        tokens = [o.label.to_token() for o in objs]
        assert len(set(tokens)) == 9
        assert all(t.startswith("synthetic:") for t in tokens)

    def test_everyday_set_has_seven_objects(self):
        objs = real_objects()
        assert len(objs) == 7
        assert all(o.label.to_token().startswith("real:") for o in objs)
        assert all(o.width_mm > 0 for o in objs)

    def test_finger_engagement_steps_with_size(self):
        sizes = {}
        for o in synthetic_objects():
            sizes[o.label.to_token().split(":")[2]] = len(o.engaged_fingers)
        assert sizes == {"small": 2, "medium": 3, "large": 5}


@pytest.fixture(scope="module")
def clean_trial():
    return generate_trial(
        make_user_profile(0, 42), synthetic_objects()[4],
        np.random.SeedSequence(7), noise_mm=0.0, dropout_p=0.0,
    )


class TestGenerateTrial:

    def test_clean_final_aperture_matches_closing_rule(self, clean_trial):
        rec = clean_trial.recording
        grasp = clean_trial.schedule.grasp_frame
        width = synthetic_objects()[4].width_mm
        # positions carry file precision, so closing is exact to sub-1e-3 mm
        assert grip_aperture(rec.positions[grasp]) == pytest.approx(
            width + CLOSING_SLACK_MM, abs=1e-3)

    def test_segmentation_recovers_the_schedule(self, clean_trial):
        seg = segment_r2g(clean_trial.recording)
        sched = clean_trial.schedule
        assert abs(seg.start_frame - sched.start_frame) <= 1
        assert abs(seg.grasp_frame - sched.grasp_frame) <= 1

    def test_movement_duration_follows_fitts_time(self, clean_trial):
        sched = clean_trial.schedule
        assert sched.movement_frames == round(sched.movement_time_s * 960)
        assert 0.3 < sched.movement_time_s < 2.0

    def test_rest_phase_holds_the_start_touch(self, clean_trial):
        rec = clean_trial.recording
        sched = clean_trial.schedule
        assert sched.rest_frames >= round(0.2 * 960)
        assert rec.touch[: sched.rest_frames - 1, 0].all()
        assert rec.touch[-3:, 1].all()       # object contact at the end

    def test_same_seed_is_byte_identical(self):
        kwargs = dict(noise_mm=0.3, dropout_p=0.01)
        a = generate_trial(make_user_profile(1, 42), synthetic_objects()[2],
                           np.random.SeedSequence(5), **kwargs)
        b = generate_trial(make_user_profile(1, 42), synthetic_objects()[2],
                           np.random.SeedSequence(5), **kwargs)
        assert write_recording(a.recording) == write_recording(b.recording)

    def test_recording_round_trips_through_the_file_format(self, clean_trial):
        text = write_recording(clean_trial.recording)
        back = parse_recording(text)
        assert np.array_equal(back.positions, clean_trial.recording.positions)
        assert np.array_equal(back.touch, clean_trial.recording.touch)

    def test_rejects_object_at_the_start_position(self):
        obj = SynthObject(ObjectLabel.synthetic("sphere", "small"),
                          np.array([0.0, 0.0, 0.0]), 20.0)
        with pytest.raises(ValueError):
            generate_trial(make_user_profile(0, 42), obj, np.random.SeedSequence(1))

    def test_speed_profile_single_peaked_on_clean_trial(self, clean_trial):
        sched = clean_trial.schedule
        ref = clean_trial.clean.positions[:, 11, :]
        v = np.linalg.norm(np.diff(ref, axis=0), axis=1) * 960 / 1000.0
        reach = v[sched.start_frame + 1 : sched.grasp_frame]
        # coarse sampling lifts real slope changes above file quantization
        moving = reach[reach > 0.02][::16]
        rising = np.diff(moving) > 0
        assert np.sum(rising[:-1] & ~rising[1:]) == 1

    def test_size_orders_final_aperture_within_user(self):
        objs = synthetic_objects()
        for user_index in range(2):
            user = make_user_profile(user_index, 42)
            finals = []
            for idx in (0, 1, 2):             # one shape, three sizes
                t = generate_trial(user, objs[idx], np.random.SeedSequence(idx),
                                   noise_mm=0.0, dropout_p=0.0)
                finals.append(grip_aperture(t.clean.positions[t.schedule.grasp_frame]))
            assert finals[0] < finals[1] < finals[2]


class TestDropouts:
    def test_zero_probability_is_identity(self):
        assert plan_dropouts(960, 0.0, np.random.default_rng(0)).size == 0

    def test_expected_rate_and_no_adjacent_deletions(self):
        counts = []
        for seed in range(30):
            deleted = plan_dropouts(960, 0.01, np.random.default_rng(seed))
            counts.append(deleted.size)
            if deleted.size > 1:
                assert np.all(np.diff(deleted) > 1)
            assert deleted.size == 0 or (deleted[0] > 0 and deleted[-1] < 959)
        assert 5.0 < np.mean(counts) < 15.0

    def test_deterministic_per_seed(self):
        a = plan_dropouts(500, 0.05, np.random.default_rng(9))
        b = plan_dropouts(500, 0.05, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_rejects_probability_of_one(self):
        with pytest.raises(ValueError):
            plan_dropouts(100, 1.0, np.random.default_rng(0))

    def test_each_motion_dropout_doubles_local_displacement(self, dropout_trial):
        trial = dropout_trial
        kept = trial.kept_frames
        rate = trial.recording.rate_hz
        ref = trial.recording.positions[:, 11, :]
        raw = np.concatenate([[0.0], np.linalg.norm(np.diff(ref, axis=0), axis=1) * rate / 1000.0])
        clean_ref = trial.clean.positions[:, 11, :]
        clean_v = np.concatenate(
            [[0.0], np.linalg.norm(np.diff(clean_ref, axis=0), axis=1) * rate / 1000.0])[kept]
        rows = np.searchsorted(kept, trial.deleted_frames)
        moving = clean_v[rows] > 0.1
        assert moving.any()
        assert np.all(raw[rows][moving] > 1.7 * clean_v[rows][moving])

    def test_stream_stays_uniform_after_deletions(self, dropout_trial):
        rec = dropout_trial.recording
        assert np.array_equal(rec.frame_index, np.arange(rec.num_frames))
        assert rec.num_frames == dropout_trial.clean.num_frames - dropout_trial.deleted_frames.size


class TestCorpus:
    def test_product_rule_and_size_helper(self, small_corpus):
        assert len(small_corpus) == 3 * 9 * 1
        assert corpus_size(GenConfig(users=3, reps=1, seed=11)) == 27

    def test_paper_scale_configuration(self):
        assert corpus_size(GenConfig(users=16, reps=3, object_set="both")) == 768

    def test_trial_identity_fields(self, small_corpus):
        trial = small_corpus[0].recording
        assert trial.user_id == "u00"
        assert trial.session_id == "s1"
        assert trial.trial_id == f"u00-{trial.object_label.to_token().replace(':', '-')}-s1"
        ids = [t.recording.trial_id for t in small_corpus]
        assert len(set(ids)) == len(ids)

    def test_regeneration_is_byte_identical(self):
        cfg = GenConfig(users=1, reps=1, seed=11)
        a = [write_recording(t.recording) for t in generate_corpus(cfg)]
        b = [write_recording(t.recording) for t in generate_corpus(cfg)]
        assert a == b

    def test_unknown_object_set_rejected(self):
        with pytest.raises(ValueError):
            GenConfig(object_set="imaginary").objects()
