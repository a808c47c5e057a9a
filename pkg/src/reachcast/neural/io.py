"""Binary model serialization: compact, little-endian, checksummed."""

from __future__ import annotations

import struct
import zlib

import numpy as np

from ..dataset import NormStats
from ..features import FeatureSet
from ..tasks import Task
from .network import HeadParams, LstmParams, Model, ModelConfig, count_params

MAGIC = b"GPM1"
VERSION = 1


class ModelFormatError(ValueError):
    """Model file is corrupt, truncated, or structurally inconsistent."""


def _gate_slices(arr: np.ndarray, hidden: int) -> list[np.ndarray]:
    return [arr[k * hidden : (k + 1) * hidden] for k in range(4)]


def save_model(model: Model) -> bytes:
    """Serialize to bytes: header, config, normalization stats, f32 weights, CRC32."""
    cfg = model.config
    norm = model.norm
    if norm is None:
        norm = NormStats(
            feature_mean=np.zeros(cfg.input_dim),
            feature_std=np.ones(cfg.input_dim),
            target_mean=np.zeros(cfg.output_dim),
            target_std=np.ones(cfg.output_dim),
            constant_features=np.zeros(cfg.input_dim, dtype=bool),
        )

    buf = bytearray()
    buf += MAGIC
    buf += struct.pack(
        "<8I",
        VERSION,
        cfg.task.wire_id,
        cfg.feature_set.wire_id,
        cfg.input_dim,
        cfg.hidden,
        cfg.fc,
        cfg.output_dim,
        cfg.window_len,
    )
    buf += struct.pack("<f", cfg.dropout)
    for arr in (norm.feature_mean, norm.feature_std, norm.target_mean, norm.target_std):
        arr = np.ascontiguousarray(arr, dtype="<f8")
        buf += struct.pack("<I", arr.shape[0])
        buf += arr.tobytes()

    # fixed parameter order: per-gate input weights, recurrent weights,
    # biases (i, f, g, o each), then the head
    blocks = (
        _gate_slices(model.lstm.wx, cfg.hidden)
        + _gate_slices(model.lstm.wh, cfg.hidden)
        + _gate_slices(model.lstm.b, cfg.hidden)
        + [model.head.fc_w, model.head.fc_b, model.head.out_w, model.head.out_b]
    )
    for block in blocks:
        buf += np.ascontiguousarray(block, dtype="<f4").tobytes()

    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    return bytes(buf)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.data):
            raise ModelFormatError("file shorter than its declared contents")
        values = struct.unpack_from(fmt, self.data, self.off)
        self.off += size
        return values

    def take_f64(self, count: int) -> np.ndarray:
        size = 8 * count
        if self.off + size > len(self.data):
            raise ModelFormatError("file shorter than its declared contents")
        arr = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.off)
        self.off += size
        return arr.astype(np.float64)

    def take_f32(self, shape: tuple) -> np.ndarray:
        count = int(np.prod(shape))
        size = 4 * count
        if self.off + size > len(self.data):
            raise ModelFormatError("file shorter than its declared contents")
        arr = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.off)
        self.off += size
        return arr.astype(np.float64).reshape(shape)


def load_model(data: bytes) -> Model:
    """Parse bytes from save_model; validates magic, version, checksum, shapes."""
    if len(data) < len(MAGIC) + 4:
        raise ModelFormatError("checksum mismatch: file truncated")
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("bad magic: not a model file")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ModelFormatError("checksum mismatch")

    r = _Reader(data[:-4])
    r.off = len(MAGIC)
    version, task_id, fs_id, d, h, fc, out, window_len = r.take("<8I")
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    (dropout,) = r.take("<f")
    try:
        task = Task.from_wire_id(task_id)
        feature_set = FeatureSet.from_wire_id(fs_id)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    if task.output_dim != out:
        raise ModelFormatError(
            f"output size {out} does not match task {task.value} ({task.output_dim})"
        )
    try:
        config = ModelConfig(
            task=task,
            feature_set=feature_set,
            input_dim=int(d),
            hidden=int(h),
            window_len=int(window_len),
            fc=int(fc),
            dropout=float(dropout),
        )
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None

    stats = []
    for expected in (d, d, out, out):
        (length,) = r.take("<I")
        if length != expected:
            raise ModelFormatError(
                f"normalization array length {length}, expected {expected}"
            )
        stats.append(r.take_f64(length))
    norm = NormStats(
        feature_mean=stats[0],
        feature_std=stats[1],
        target_mean=stats[2],
        target_std=stats[3],
        constant_features=np.zeros(int(d), dtype=bool),
    )

    wx = np.empty((4 * h, d))
    wh = np.empty((4 * h, h))
    b = np.empty(4 * h)
    for k in range(4):
        wx[k * h : (k + 1) * h] = r.take_f32((h, d))
    for k in range(4):
        wh[k * h : (k + 1) * h] = r.take_f32((h, h))
    for k in range(4):
        b[k * h : (k + 1) * h] = r.take_f32((h,))
    head = HeadParams(
        fc_w=r.take_f32((fc, h)),
        fc_b=r.take_f32((fc,)),
        out_w=r.take_f32((out, fc)),
        out_b=r.take_f32((out,)),
    )
    if r.off != len(r.data):
        raise ModelFormatError("trailing bytes after parameter block")

    expected = count_params(config)
    actual = 4 * h * d + 4 * h * h + 4 * h + fc * h + fc + out * fc + out
    if actual != expected:            # defensive; both derive from the config
        raise ModelFormatError("parameter count mismatch")

    return Model(config=config, lstm=LstmParams(wx=wx, wh=wh, b=b), head=head, norm=norm)


def save_model_file(model: Model, path):
    with open(path, "wb") as fh:
        fh.write(save_model(model))


def load_model_file(path) -> Model:
    with open(path, "rb") as fh:
        return load_model(fh.read())
