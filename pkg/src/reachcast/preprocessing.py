"""Causal signal conditioning: hand velocity, dropout-spike repair, FIR smoothing.

Everything here is stream-first. The batch helpers exist for dataset builds and
tests and are bit-for-bit reconciled with the streaming path to 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .capture import NUM_SENSORS, RATE_HZ, SENSOR_HAND_REF, Recording, TrackingFrame

DEFAULT_FIR_ORDER = 25
DEFAULT_CUTOFF_HZ = 25.0
SPIKE_THRESHOLD = 0.1          # m/s jump that marks a dropped-frame artifact
NUM_CHANNELS = 3 * NUM_SENSORS + 1


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase low-pass designed by the windowed-sinc method."""

    taps: np.ndarray
    cutoff_hz: float
    rate_hz: float

    @property
    def order(self) -> int:
        return self.taps.shape[0] - 1

    @property
    def group_delay(self) -> float:
        """Delay in samples; symmetric taps give exactly order / 2."""
        return self.order / 2.0

    def response_db(self, freqs_hz: np.ndarray) -> np.ndarray:
        """Magnitude response in dB at the given frequencies."""
        freqs_hz = np.asarray(freqs_hz, dtype=np.float64)
        n = np.arange(self.taps.shape[0])
        phase = np.exp(-2j * np.pi * np.outer(freqs_hz / self.rate_hz, n))
        mag = np.abs(phase @ self.taps)
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(mag)


def design_lowpass_fir(
    order: int = DEFAULT_FIR_ORDER,
    cutoff_hz: float = DEFAULT_CUTOFF_HZ,
    rate_hz: float = float(RATE_HZ),
) -> FirFilter:
    """Hamming-windowed sinc taps, symmetrized and normalized to unit DC gain."""
    if order < 1:
        raise ValueError(f"filter order must be >= 1, got {order}")
    if not 0.0 < cutoff_hz < rate_hz / 2.0:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz outside (0, {rate_hz / 2.0}) for rate {rate_hz} Hz"
        )
    n = np.arange(order + 1, dtype=np.float64)
    window = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / order)
    taps = window * np.sinc(2.0 * cutoff_hz / rate_hz * (n - order / 2.0))
    taps = 0.5 * (taps + taps[::-1])       # force exact coefficient symmetry
    taps = taps / taps.sum()
    return FirFilter(taps=taps, cutoff_hz=float(cutoff_hz), rate_hz=float(rate_hz))


class FirChannelBank:
    """Causal streaming convolution of many channels through one shared filter.

    Emits nothing until order + 1 samples have been pushed, then one output
    per input. Output k equals the batch convolution at the same index.
    """

    def __init__(self, fir: FirFilter, num_channels: int):
        self._taps = fir.taps[::-1].copy()   # buffer rows run oldest to newest
        self._num_taps = fir.taps.shape[0]
        self._buffer = np.zeros((self._num_taps, num_channels))
        self._seen = 0

    @property
    def primed(self) -> bool:
        return self._seen >= self._num_taps

    def push(self, x: np.ndarray) -> np.ndarray | None:
        self._buffer[:-1] = self._buffer[1:]
        self._buffer[-1] = x
        self._seen += 1
        if not self.primed:
            return None
        return self._taps @ self._buffer


class FirChannel:
    """Single-channel convenience wrapper around FirChannelBank."""

    def __init__(self, fir: FirFilter):
        self._bank = FirChannelBank(fir, 1)

    @property
    def primed(self) -> bool:
        return self._bank.primed

    def step(self, x: float) -> float | None:
        out = self._bank.push(np.array([x]))
        return None if out is None else float(out[0])


def filter_batch(values: np.ndarray, fir: FirFilter) -> np.ndarray:
    """Causal filtering of a whole sequence; output j covers samples j-order..j.

    values may be (n,) or (n, channels); rows before priming are dropped, so
    the result has n - order rows aligned with input indices order..n-1.
    """
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None]
    n = values.shape[0]
    if n <= fir.order:
        return np.empty((0,) if squeeze else (0, values.shape[1]))
    out = np.empty((n - fir.order, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.convolve(values[:, c], fir.taps, mode="valid")
    return out[:, 0] if squeeze else out


def compute_velocity(
    prev_position: np.ndarray, position: np.ndarray, rate_hz: float = float(RATE_HZ)
) -> float:
    """Per-frame speed of the hand reference point in m/s from mm positions."""
    delta = np.asarray(position, dtype=np.float64) - np.asarray(prev_position, dtype=np.float64)
    return float(rate_hz * np.linalg.norm(delta) / 1000.0)


class SpikeRepair:
    """One-frame-lookahead despiker for the velocity channel.

    A dropped frame doubles the apparent displacement, producing a velocity
    sample that jumps up by more than the threshold and immediately falls
    back down by more than the threshold. Each emitted sample is therefore
    held for one frame; a flagged sample is replaced by the mean of its raw
    neighbors. Detection compares raw input steps, so the streaming and batch
    paths agree exactly.
    """

    def __init__(self, threshold: float = SPIKE_THRESHOLD):
        self.threshold = threshold
        self.repair_count = 0
        self._prev: float | None = None      # raw sample before the pending one
        self._pending: float | None = None   # raw sample awaiting its successor

    def push(self, value: float) -> float | None:
        """Feed one raw velocity sample; returns the verdict for the previous one."""
        value = float(value)
        if self._pending is None:
            self._pending = value
            return None
        out = self._pending
        if (
            self._prev is not None
            and self._pending - self._prev > self.threshold
            and value - self._pending < -self.threshold
        ):
            out = 0.5 * (self._prev + value)
            self.repair_count += 1
        self._prev = self._pending
        self._pending = value
        return out

    def flush(self) -> float | None:
        """Emit the held last sample; a trailing sample has no lookahead."""
        out = self._pending
        self._prev = self._pending
        self._pending = None
        return out


def repair_velocity(
    values: np.ndarray, threshold: float = SPIKE_THRESHOLD
) -> tuple[np.ndarray, np.ndarray]:
    """Batch spike repair; returns (repaired, replaced_mask).

    Matches the streaming SpikeRepair sample for sample: detection looks at
    raw neighbor steps and replacement averages raw neighbors, so a repaired
    sample never triggers further repairs.
    """
    values = np.asarray(values, dtype=np.float64)
    out = values.copy()
    mask = np.zeros(values.shape[0], dtype=bool)
    if values.shape[0] < 3:
        return out, mask
    steps = np.diff(values)
    spikes = np.flatnonzero((steps[:-1] > threshold) & (steps[1:] < -threshold)) + 1
    out[spikes] = 0.5 * (values[spikes - 1] + values[spikes + 1])
    mask[spikes] = True
    return out, mask


@dataclass(frozen=True)
class ProcessedSample:
    """Filtered sensor state for one frame, aligned with its raw counterpart."""

    frame_index: int
    positions: np.ndarray        # (12, 3) filtered mm
    velocity: float              # filtered, repaired hand speed m/s
    raw_positions: np.ndarray    # (12, 3) unfiltered mm, same frame


@dataclass
class ProcessedSeries:
    """Batch output of the preprocessing pipeline over one recording."""

    frame_index: np.ndarray      # (m,)
    positions: np.ndarray        # (m, 12, 3)
    velocity: np.ndarray         # (m,)
    raw_positions: np.ndarray    # (m, 12, 3)
    repaired: np.ndarray         # (m,) bool, velocity sample was despiked

    @property
    def num_samples(self) -> int:
        return self.frame_index.shape[0]


class StreamProcessor:
    """Causal frame-rate pipeline: velocity, despike, FIR-filter all channels.

    The despiker's one-frame lookahead delays every channel by one frame so
    that positions and velocity stay aligned; the FIR adds its priming delay
    on top. The first output therefore appears after order + 2 input frames
    and carries the frame index of the sample at the filter's newest tap.
    Call finish() after the last frame to drain the lookahead slot.
    """

    def __init__(
        self,
        fir: FirFilter | None = None,
        rate_hz: float = float(RATE_HZ),
        spike_threshold: float = SPIKE_THRESHOLD,
    ):
        self.fir = fir if fir is not None else design_lowpass_fir(rate_hz=rate_hz)
        self.rate_hz = rate_hz
        self._bank = FirChannelBank(self.fir, NUM_CHANNELS)
        self._repair = SpikeRepair(spike_threshold)
        self._prev_positions: np.ndarray | None = None
        self._pending: tuple[int, np.ndarray] | None = None

    @property
    def repair_count(self) -> int:
        return self._repair.repair_count

    @property
    def primed(self) -> bool:
        """True once the pipeline has produced (or is about to produce) output."""
        return self._bank.primed

    def _emit(self, frame_index: int, positions: np.ndarray, velocity: float):
        channels = np.empty(NUM_CHANNELS)
        channels[:-1] = positions.ravel()
        channels[-1] = velocity
        out = self._bank.push(channels)
        if out is None:
            return None
        return ProcessedSample(
            frame_index=frame_index,
            positions=out[:-1].reshape(NUM_SENSORS, 3),
            velocity=float(out[-1]),
            raw_positions=positions.copy(),
        )

    def push(self, frame: TrackingFrame) -> ProcessedSample | None:
        """Feed one tracking frame; returns a processed sample once available."""
        positions = np.asarray(frame.positions, dtype=np.float64)
        if self._prev_positions is None:
            velocity = 0.0                    # no displacement defined yet
        else:
            velocity = compute_velocity(
                self._prev_positions[SENSOR_HAND_REF],
                positions[SENSOR_HAND_REF],
                self.rate_hz,
            )
        self._prev_positions = positions
        verdict = self._repair.push(velocity)
        result = None
        if verdict is not None:
            held_index, held_positions = self._pending
            result = self._emit(held_index, held_positions, verdict)
        self._pending = (frame.frame_index, positions)
        return result

    def finish(self) -> ProcessedSample | None:
        """Drain the despiker's held sample after the stream ends."""
        verdict = self._repair.flush()
        if verdict is None or self._pending is None:
            return None
        held_index, held_positions = self._pending
        self._pending = None
        return self._emit(held_index, held_positions, verdict)


def preprocess_stream(
    frames: Iterable[TrackingFrame],
    fir: FirFilter | None = None,
    rate_hz: float = float(RATE_HZ),
) -> Iterator[ProcessedSample]:
    """Run the causal pipeline over a frame iterable, draining the tail."""
    proc = StreamProcessor(fir=fir, rate_hz=rate_hz)
    for frame in frames:
        out = proc.push(frame)
        if out is not None:
            yield out
    out = proc.finish()
    if out is not None:
        yield out


def preprocess_recording(
    recording: Recording, fir: FirFilter | None = None
) -> ProcessedSeries:
    """Vectorized batch equivalent of the streaming pipeline.

    Returns an empty series when the recording is shorter than the filter
    priming length.
    """
    fir = fir if fir is not None else design_lowpass_fir(rate_hz=float(recording.rate_hz))
    pos = recording.positions
    n = pos.shape[0]
    ref = pos[:, SENSOR_HAND_REF, :]
    velocity = np.zeros(n)
    if n > 1:
        velocity[1:] = recording.rate_hz * np.linalg.norm(np.diff(ref, axis=0), axis=1) / 1000.0
    repaired_velocity, repaired_mask = repair_velocity(velocity)

    channels = np.concatenate([pos.reshape(n, -1), repaired_velocity[:, None]], axis=1)
    filtered = filter_batch(channels, fir)
    m = filtered.shape[0]
    if m == 0:
        empty = np.empty((0, NUM_SENSORS, 3))
        return ProcessedSeries(
            frame_index=np.empty(0, dtype=np.int64),
            positions=empty,
            velocity=np.empty(0),
            raw_positions=empty.copy(),
            repaired=np.empty(0, dtype=bool),
        )
    return ProcessedSeries(
        frame_index=recording.frame_index[fir.order:].copy(),
        positions=filtered[:, :-1].reshape(m, NUM_SENSORS, 3),
        velocity=filtered[:, -1],
        raw_positions=pos[fir.order:].copy(),
        repaired=repaired_mask[fir.order:].copy(),
    )
