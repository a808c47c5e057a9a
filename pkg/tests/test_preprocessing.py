"""FIR design, streaming filters, velocity, spike repair, pipeline alignment."""

import numpy as np
import pytest

from reachcast import StreamProcessor, design_lowpass_fir, preprocess_recording
from reachcast.preprocessing import (
    FirChannel,
    SpikeRepair,
    compute_velocity,
    filter_batch,
    preprocess_stream,
    repair_velocity,
)

from conftest import flat_positions, make_recording, touch_pattern


def dft_magnitude_db(taps, freq_hz, rate_hz):
    # independent oracle: evaluate the transfer function term by term
    n = np.arange(taps.shape[0])
    omega = 2.0 * np.pi * freq_hz / rate_hz
    h = np.sum(taps * np.exp(-1j * omega * n))
    return 20.0 * np.log10(np.abs(h))


class TestFilterDesign:
    def test_default_design(self):
        fir = design_lowpass_fir(order=25, cutoff_hz=25.0, rate_hz=960.0)
        assert fir.taps.shape == (26,)
        assert np.array_equal(fir.taps, fir.taps[::-1])          # exact symmetry
        assert abs(fir.taps.sum() - 1.0) <= 1e-12
        assert fir.group_delay == 12.5

    def test_tiny_design_symmetry(self):
        fir = design_lowpass_fir(order=2, cutoff_hz=240.0, rate_hz=960.0)
        assert fir.taps.shape == (3,)
        assert fir.taps[0] == fir.taps[2]

    def test_stopband_attenuation(self):
        fir = design_lowpass_fir()
        assert dft_magnitude_db(fir.taps, 200.0, 960.0) <= -40.0
        assert np.allclose(
            fir.response_db(np.array([200.0]))[0],
            dft_magnitude_db(fir.taps, 200.0, 960.0),
            atol=1e-9,
        )

    def test_bad_parameters_rejected(self):
        with pytest.raises(ValueError):
            design_lowpass_fir(order=25, cutoff_hz=480.0, rate_hz=960.0)
        with pytest.raises(ValueError):
            design_lowpass_fir(order=0)

    def test_symmetry_and_gain_across_configs(self):
        for order in (1, 2, 7, 24, 25, 50):
            for cutoff in (5.0, 25.0, 100.0):
                fir = design_lowpass_fir(order=order, cutoff_hz=cutoff, rate_hz=960.0)
                assert np.array_equal(fir.taps, fir.taps[::-1])
                assert abs(fir.taps.sum() - 1.0) <= 1e-12


class TestFilterStep:
    def test_constant_input_passes_through(self):
        fir = design_lowpass_fir()
        channel = FirChannel(fir)
        outputs = [channel.step(3.5) for _ in range(60)]
        primed = [o for o in outputs if o is not None]
        assert len(outputs) - len(primed) == fir.order     # order+1 samples prime it
        assert np.allclose(primed, 3.5, atol=1e-12)

    def test_impulse_response_equals_taps(self):
        fir = design_lowpass_fir()
        channel = FirChannel(fir)
        signal = np.zeros(80)
        signal[fir.order] = 1.0      # newest sample of the first primed window
        outputs = []
        for x in signal:
            y = channel.step(x)
            if y is not None:
                outputs.append(y)
        assert np.allclose(outputs[: fir.order + 1], fir.taps, atol=1e-15)
        assert np.allclose(outputs[fir.order + 1 :], 0.0, atol=1e-15)

    def test_streaming_equals_batch_convolution(self):
        rng = np.random.default_rng(3)
        fir = design_lowpass_fir()
        for _ in range(5):
            signal = rng.normal(size=200)
            channel = FirChannel(fir)
            streamed = np.array([y for y in (channel.step(x) for x in signal) if y is not None])
            batch = np.convolve(signal, fir.taps, mode="valid")
            assert streamed.shape == batch.shape
            assert np.abs(streamed - batch).max() < 1e-9
            assert np.abs(filter_batch(signal[:, None], fir)[:, 0] - batch).max() < 1e-9


class TestVelocity:
    def test_unit_step_at_rate(self):
        assert compute_velocity(np.zeros(3), np.array([1.0, 0.0, 0.0]), 960.0) == pytest.approx(0.96)

    def test_no_motion(self):
        p = np.array([10.0, -4.0, 2.0])
        assert compute_velocity(p, p, 960.0) == 0.0

    def test_three_four_five_triangle(self):
        v = compute_velocity(np.zeros(3), np.array([1.0, 2.0, 2.0]), 960.0)
        assert v == pytest.approx(2.88)


class TestSpikeRepair:
    def test_single_spike_replaced_by_neighbor_mean(self):
        repaired, mask = repair_velocity(np.array([0.50, 0.50, 1.00, 0.50, 0.50]))
        assert np.allclose(repaired, [0.50, 0.50, 0.50, 0.50, 0.50])
        assert list(mask) == [False, False, True, False, False]

    def test_smooth_ramp_untouched(self):
        ramp = np.array([0.10, 0.15, 0.20, 0.25])
        repaired, mask = repair_velocity(ramp)
        assert np.array_equal(repaired, ramp)
        assert not mask.any()

    def test_streaming_lags_by_one_frame(self):
        repair = SpikeRepair()
        values = [0.50, 0.50, 1.00, 0.50, 0.50]
        outputs = [repair.push(v) for v in values]
        assert outputs[0] is None                          # lookahead slot
        assert outputs[1:] == [0.50, 0.50, 0.50, 0.50]
        assert repair.flush() == 0.50

    def test_streaming_equals_batch(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            values = np.abs(rng.normal(0.3, 0.2, size=50))
            spikes = rng.integers(2, 48, size=3)
            values[spikes] += 1.0
            repair = SpikeRepair()
            streamed = [repair.push(float(v)) for v in values]
            streamed = [v for v in streamed if v is not None] + [repair.flush()]
            assert np.allclose(streamed, repair_velocity(values)[0], atol=0)

    def test_rising_edge_alone_is_not_a_spike(self):
        step = np.array([0.1, 0.1, 0.9, 0.9, 0.9])         # sustained jump, no drop
        assert np.array_equal(repair_velocity(step)[0], step)

    def test_idempotent_on_dropout_trials(self, dropout_trial):
        rec = dropout_trial.recording
        deltas = np.diff(rec.positions[:, 11, :], axis=0)
        velocity = np.linalg.norm(deltas, axis=1) * rec.rate_hz / 1000.0
        velocity = np.concatenate([[0.0], velocity])
        once, first_mask = repair_velocity(velocity)
        twice, second_mask = repair_velocity(once)
        assert np.array_equal(once, twice)
        assert first_mask.any() and not second_mask.any()

    def test_dropout_spikes_detected_and_removed(self, dropout_trial):
        # compare against the generator's clean stream at the kept frames
        trial = dropout_trial
        kept = trial.kept_frames
        noisy_pos = trial.recording.positions[:, 11, :]
        rate = trial.recording.rate_hz

        def velocities(p):
            v = np.linalg.norm(np.diff(p, axis=0), axis=1) * rate / 1000.0
            return np.concatenate([[0.0], v])

        raw = velocities(noisy_pos)
        repaired, mask = repair_velocity(raw)
        # true instantaneous velocity: consecutive clean frames, sampled at
        # the kept frames (a deleted frame doubles the raw displacement)
        clean = velocities(trial.clean.positions[:, 11, :])[kept]
        assert trial.deleted_frames.size > 0
        mae = np.abs(repaired - clean).mean()
        assert mae < 0.02
        # dropouts during motion leave a detectable excursion; those must be
        # caught and pulled back toward the clean value
        rows = np.searchsorted(kept, trial.deleted_frames)
        genuine = rows[(raw[rows] - clean[rows]) > 0.1]
        assert genuine.size > 0
        assert mask[genuine].all()
        assert np.all(np.abs(repaired[genuine] - clean[genuine])
                      < np.abs(raw[genuine] - clean[genuine]))


class TestPipeline:
    def test_short_stream_yields_nothing_and_reports_unprimed(self):
        rec = make_recording(flat_positions(20), touch_pattern(20, 5, 15))
        proc = StreamProcessor()
        outputs = [proc.push(f) for f in rec.frames()]
        assert all(o is None for o in outputs)
        assert proc.finish() is None
        assert not proc.primed

    def test_constant_pose_velocity_zero_positions_pass(self):
        rec = make_recording(flat_positions(120, value=55.0), touch_pattern(120, 30, 90))
        series = preprocess_recording(rec)
        assert series.num_samples == 120 - 25
        assert np.allclose(series.velocity, 0.0, atol=1e-15)
        assert np.allclose(series.positions, 55.0, atol=1e-9)

    def test_streaming_equals_offline_pipeline(self, sample_trial):
        rec = sample_trial.recording
        series = preprocess_recording(rec)
        streamed = list(preprocess_stream(rec.frames()))
        assert len(streamed) == series.num_samples
        pos = np.stack([s.positions for s in streamed])
        vel = np.array([s.velocity for s in streamed])
        idx = np.array([s.frame_index for s in streamed])
        assert np.array_equal(idx, series.frame_index)
        assert np.abs(pos - series.positions).max() < 1e-9
        assert np.abs(vel - series.velocity).max() < 1e-9

    def test_causality_under_truncation(self, sample_trial):
        rec = sample_trial.recording
        full = [s for s in preprocess_stream(rec.frames())]
        cut = rec.num_frames // 2
        proc = StreamProcessor()
        partial = []
        for i, frame in enumerate(rec.frames()):
            if i >= cut:
                break
            out = proc.push(frame)
            if out is not None:
                partial.append(out)
        for a, b in zip(partial, full):
            assert a.frame_index == b.frame_index
            assert np.array_equal(a.positions, b.positions)
            assert a.velocity == b.velocity

    def test_first_output_after_order_plus_two_frames(self):
        rec = make_recording(flat_positions(60), touch_pattern(60, 10, 50))
        proc = StreamProcessor()
        first_at = None
        for i, frame in enumerate(rec.frames()):
            if proc.push(frame) is not None:
                first_at = i
                break
        assert first_at == proc.fir.order + 1       # 27th frame, index 26

    def test_group_delay_alignment(self):
        # a position step and the velocity pulse it implies stay on the same frame
        n = 120
        positions = flat_positions(n)
        positions[60:, :, 0] += 5.0
        rec = make_recording(positions, touch_pattern(n, 10, 110))
        series = preprocess_recording(rec)
        pos_jump = int(series.frame_index[np.argmax(np.diff(series.positions[:, 11, 0]) > 2.0)]) + 1
        vel_peak = int(series.frame_index[np.argmax(series.velocity)])
        assert abs(pos_jump - vel_peak) <= 1
