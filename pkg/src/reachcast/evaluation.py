"""Experiment protocols: metrics, cross-validation grids, leave-one-out splits,
transfer learning, and streaming runtime simulation."""

from __future__ import annotations

import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .capture import Recording, TrackingFrame, segment_r2g
from .dataset import (
    WindowDataset,
    compute_norm_stats,
    split_kfold,
    split_leave_one_group_out,
)
from .features import FeatureSet, assemble_features
from .neural import (
    Model,
    ModelConfig,
    forward,
    init_model,
    predict,
    train,
    transfer_train,
)
from .preprocessing import StreamProcessor, design_lowpass_fir
from .tasks import Task

THREADS_ENV = "REACHCAST_THREADS"
PROTOCOLS = ("kfold", "l1uo", "l1so", "l1oo")
_GROUP_KEYS = {"l1uo": "user", "l1so": "session", "l1oo": "object"}
MIN_EVAL_WINDOWS = 40


def mae(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean absolute error, in whatever units the inputs carry."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.size == 0:
        raise ValueError("empty input")
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {targets.shape}")
    return float(np.mean(np.abs(preds - targets)))


def _as_labels(preds: np.ndarray) -> np.ndarray:
    preds = np.asarray(preds)
    return preds.argmax(axis=-1) if preds.ndim == 2 else preds.astype(np.int64)


def accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    """Percent of correct argmax predictions; preds may be probabilities or labels."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty input")
    return float(np.mean(_as_labels(preds) == labels) * 100.0)


def confusion(preds: np.ndarray, labels: np.ndarray, num_classes: int | None = None) -> np.ndarray:
    """Counts indexed [true, predicted]."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty input")
    hard = _as_labels(preds)
    if num_classes is None:
        num_classes = int(max(hard.max(), labels.max())) + 1
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (labels, hard), 1)
    return out


@dataclass
class FoldMetrics:
    key: str
    metrics: dict[str, float]
    confusion: np.ndarray | None = None


@dataclass
class MetricsReport:
    task: Task
    protocol: str
    feature_set: FeatureSet
    window_len: int
    folds: list[FoldMetrics]
    wall_clock_s: float = 0.0

    def metric_names(self) -> list[str]:
        return list(self.folds[0].metrics) if self.folds else []

    def values(self, name: str) -> np.ndarray:
        return np.array([f.metrics[name] for f in self.folds])

    def mean(self, name: str) -> float:
        return float(self.values(name).mean())

    def std(self, name: str) -> float:
        return float(self.values(name).std())

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("protocol,task,features,window,fold,metric,value\n")
        prefix = f"{self.protocol},{self.task.value},{self.feature_set.value},{self.window_len}"
        for fold in self.folds:
            for name, value in fold.metrics.items():
                out.write(f"{prefix},{fold.key},{name},{value:.6f}\n")
        for name in self.metric_names():
            out.write(f"{prefix},mean,{name},{self.mean(name):.6f}\n")
            out.write(f"{prefix},std,{name},{self.std(name):.6f}\n")
        return out.getvalue()


@dataclass
class ProtocolResult:
    report: MetricsReport
    models: list[Model]
    fold_keys: list[str]
    val_indices: list[np.ndarray]


def _derive_seed(seed: int, *branch: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=branch).generate_state(1)[0])


def _num_threads(threads: int | None) -> int:
    if threads is not None:
        return max(int(threads), 1)
    env = os.environ.get(THREADS_ENV)
    return max(int(env), 1) if env else 1


def _fit_eval_fold(
    windows: WindowDataset,
    task: Task,
    feature_set: FeatureSet,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    seed: int,
    epochs: int,
    lr: float,
    batch_size: int,
    hidden: int,
    dropout: float,
) -> tuple[Model, FoldMetrics, np.ndarray]:
    x_train = windows.materialize(feature_set, train_idx)
    y_train = windows.targets(task, train_idx)
    if task.is_classification:
        stats = compute_norm_stats(x_train, output_dim=task.output_dim)
        y_std = y_train
    else:
        stats = compute_norm_stats(x_train, y_train)
        y_std = stats.apply_targets(y_train)
    config = ModelConfig(
        task=task,
        feature_set=feature_set,
        input_dim=feature_set.dim,
        hidden=hidden,
        window_len=windows.window_len,
        dropout=dropout,
    )
    model = init_model(config, seed)
    model.norm = stats
    train(model, stats.apply_features(x_train), y_std,
          epochs=epochs, lr=lr, batch_size=batch_size, seed=seed)

    x_val = windows.materialize(feature_set, val_idx)
    preds = predict(model, x_val)
    metrics, conf = _score(task, windows, val_idx, preds)
    return model, metrics, conf


def _score(task, windows, val_idx, preds):
    if task.is_classification:
        labels = windows.targets(task, val_idx)
        conf = confusion(preds, labels, num_classes=task.output_dim)
        return {"accuracy_pct": accuracy(preds, labels)}, conf
    truth = windows.targets(task, val_idx)
    metrics = {
        f"mae_{name}": mae(preds[:, j], truth[:, j])
        for j, name in enumerate(task.output_names)
    }
    return metrics, None


def _protocol_splits(windows: WindowDataset, protocol: str, k: int, seed: int):
    if protocol == "kfold":
        return [(str(i), tr, va) for i, (tr, va) in enumerate(split_kfold(len(windows), k, seed))]
    if protocol in _GROUP_KEYS:
        groups = windows.group_values(_GROUP_KEYS[protocol])
        return [(str(val), tr, va) for val, tr, va in split_leave_one_group_out(groups)]
    raise ValueError(f"unknown protocol {protocol!r}")


def run_protocol(
    windows: WindowDataset,
    task: Task,
    feature_set: FeatureSet,
    protocol: str = "kfold",
    k: int = 4,
    seed: int = 0,
    epochs: int = 60,
    lr: float = 1e-3,
    batch_size: int = 32,
    hidden: int | None = None,
    dropout: float = 0.2,
    threads: int | None = None,
) -> ProtocolResult:
    """Train and evaluate one (task, feature set) cell under a split protocol.

    Normalization statistics are computed inside each fold from its training
    part only. Folds are independent deterministic jobs keyed off the split
    and may run in parallel; results are assembled in split order.
    """
    if protocol == "l1oo" and task in (Task.OBJECT_REAL, Task.OBJECT_SYNTH):
        raise ValueError("cannot hold out the very class the task must predict")
    if len(windows) == 0:
        raise ValueError("empty dataset")
    hidden = hidden if hidden is not None else task.default_hidden
    splits = _protocol_splits(windows, protocol, k, seed)

    started = time.perf_counter()

    def job(item):
        index, (key, train_idx, val_idx) = item
        model, metrics, conf = _fit_eval_fold(
            windows, task, feature_set, train_idx, val_idx,
            _derive_seed(seed, 2, index), epochs, lr, batch_size, hidden, dropout,
        )
        return key, model, FoldMetrics(key=key, metrics=metrics, confusion=conf), val_idx

    workers = _num_threads(threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, enumerate(splits)))
    else:
        results = [job(item) for item in enumerate(splits)]

    report = MetricsReport(
        task=task,
        protocol=protocol,
        feature_set=feature_set,
        window_len=windows.window_len,
        folds=[fold for _, _, fold, _ in results],
        wall_clock_s=time.perf_counter() - started,
    )
    return ProtocolResult(
        report=report,
        models=[m for _, m, _, _ in results],
        fold_keys=[k for k, _, _, _ in results],
        val_indices=[v for _, _, _, v in results],
    )


@dataclass
class TransferRow:
    size: int
    metrics: dict[str, float]


@dataclass
class TransferReport:
    user: str
    task: Task
    feature_set: FeatureSet
    window_len: int
    rows: list[TransferRow] = field(default_factory=list)

    def improved(self, metric: str, size: int) -> bool:
        baseline = self.rows[0].metrics[metric]
        row = next(r for r in self.rows if r.size == size)
        return row.metrics[metric] < baseline

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("protocol,task,features,window,fold,metric,value\n")
        prefix = f"transfer,{self.task.value},{self.feature_set.value},{self.window_len}"
        for row in self.rows:
            for name, value in row.metrics.items():
                out.write(f"{prefix},{self.user}/{row.size},{name},{value:.6f}\n")
        return out.getvalue()


def run_transfer(
    windows: WindowDataset,
    task: Task,
    feature_set: FeatureSet,
    held_out_user: str,
    sizes: tuple[int, ...] = (50, 150, 250),
    seed: int = 0,
    base_model: Model | None = None,
    epochs: int = 60,
    transfer_epochs: int = 50,
    lr: float = 1e-3,
    batch_size: int = 32,
    hidden: int | None = None,
    dropout: float = 0.2,
) -> TransferReport:
    """Leave one user out, then adapt the base model on small samples of them.

    Adaptation windows are drawn uniformly (seeded, without replacement)
    across the user's windows, larger sizes extending smaller ones, and stay
    disjoint from the evaluation windows; every row of the report, baseline
    included, is measured on that same evaluation set.
    """
    user_idx = np.flatnonzero(windows.user_id == held_out_user)
    if user_idx.size == 0:
        raise ValueError(f"no windows for user {held_out_user!r}")
    max_size = max(sizes)
    if user_idx.size < max_size + MIN_EVAL_WINDOWS:
        raise ValueError(
            f"user {held_out_user!r} has {user_idx.size} windows; "
            f"need at least {max_size + MIN_EVAL_WINDOWS}"
        )

    if base_model is None:
        rest_idx = np.flatnonzero(windows.user_id != held_out_user)
        hidden = hidden if hidden is not None else task.default_hidden
        base_model, _, _ = _fit_eval_fold(
            windows, task, feature_set, rest_idx, user_idx[:1],
            _derive_seed(seed, 3), epochs, lr, batch_size, hidden, dropout,
        )

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(4,)))
    drawn = rng.choice(user_idx, size=max_size, replace=False)
    eval_idx = np.setdiff1d(user_idx, drawn)
    x_eval = windows.materialize(feature_set, eval_idx)

    def evaluate(model: Model) -> dict[str, float]:
        metrics, _ = _score(task, windows, eval_idx, predict(model, x_eval))
        return metrics

    report = TransferReport(
        user=held_out_user, task=task, feature_set=feature_set,
        window_len=windows.window_len,
    )
    report.rows.append(TransferRow(size=0, metrics=evaluate(base_model)))
    stats = base_model.norm
    for size in sizes:
        adapt_idx = drawn[:size]
        x_adapt = stats.apply_features(windows.materialize(feature_set, adapt_idx))
        y_adapt = windows.targets(task, adapt_idx)
        if not task.is_classification:
            y_adapt = stats.apply_targets(y_adapt)
        adapted = transfer_train(
            base_model, x_adapt, y_adapt,
            epochs=transfer_epochs, lr=lr, batch_size=batch_size,
            seed=_derive_seed(seed, 5, size),
        )
        report.rows.append(TransferRow(size=size, metrics=evaluate(adapted)))
    return report


@dataclass(frozen=True)
class CurveBin:
    lo: float
    hi: float
    mean: float
    std: float
    count: int

    @property
    def one_std_below(self) -> float:
        return self.mean - self.std


@dataclass
class SimulationResult:
    """Per-prediction log of a deployment-style streaming run."""

    task: Task
    window_len: int
    warmup_frames: int                 # frames consumed before the first prediction
    trial_id: np.ndarray
    end_frame: np.ndarray
    true_time_ms: np.ndarray
    true_distance_mm: np.ndarray
    predictions: np.ndarray            # (n, O) raw units, or (n, C) probabilities
    true_labels: np.ndarray | None = None

    def __len__(self) -> int:
        return self.end_frame.shape[0]

    def _series(self, metric: str) -> np.ndarray:
        names = list(self.task.output_names)
        if metric == "accuracy_pct":
            return (self.predictions.argmax(axis=1) == self.true_labels) * 100.0
        if metric == "mae_distance_mm":
            truth = self.true_distance_mm
            return np.abs(self.predictions[:, names.index("distance_mm")] - truth)
        if metric == "mae_time_ms":
            truth = self.true_time_ms
            return np.abs(self.predictions[:, names.index("time_ms")] - truth)
        raise ValueError(f"unknown metric {metric!r}")

    def curve(self, axis: str, metric: str, bin_width: float | None = None) -> list[CurveBin]:
        """Bin a per-prediction series by true time-to-grasp or true distance."""
        if axis == "time":
            positions = self.true_time_ms
            width = 50.0 if bin_width is None else bin_width
        elif axis == "distance":
            positions = self.true_distance_mm
            width = 25.0 if bin_width is None else bin_width
        else:
            raise ValueError(f"unknown axis {axis!r}")
        values = self._series(metric)
        if len(self) == 0:
            return []
        edges = np.arange(0.0, positions.max() + width, width)
        bins = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = (positions >= lo) & ((positions < hi) | (hi == edges[-1]))
            picked = values[mask]
            if picked.size:
                bins.append(CurveBin(float(lo), float(hi), float(picked.mean()),
                                     float(picked.std()), int(picked.size)))
            else:
                bins.append(CurveBin(float(lo), float(hi), 0.0, 0.0, 0))
        return bins


def curves_jsonl(named_curves: dict[str, list[CurveBin]]) -> str:
    """One JSON object per bin; axis/metric key alongside the bin fields."""
    out = io.StringIO()
    for name, bins in named_curves.items():
        axis, _, metric = name.partition("/")
        for b in bins:
            out.write(json.dumps({
                "axis": axis, "metric": metric,
                "bin_lo": b.lo, "bin_hi": b.hi,
                "mean": round(b.mean, 6), "std": round(b.std, 6), "count": b.count,
            }) + "\n")
    return out.getvalue()


def simulate_runtime(
    model: Model,
    recordings: list[Recording],
    time_bin_ms: float = 50.0,
    dist_bin_mm: float = 25.0,
) -> SimulationResult:
    """Stream each recording's reach phase exactly as deployment would.

    Frames from movement start through grasp pass one at a time through the
    causal pipeline; every primed frame appends one feature row, and every
    full window triggers one prediction scored against the ground truth at
    that frame. Binned curves are available from the returned result.
    """
    del time_bin_ms, dist_bin_mm      # defaults live in SimulationResult.curve
    cfg = model.config
    fir = design_lowpass_fir()
    trial_ids, end_frames, times, distances, preds, labels = [], [], [], [], [], []
    warmup = None

    for rec in recordings:
        seg = segment_r2g(rec)
        rows = np.flatnonzero(
            (rec.frame_index >= seg.start_frame) & (rec.frame_index <= seg.grasp_frame)
        )
        proc = StreamProcessor(fir=fir, rate_hz=float(rec.rate_hz))
        window = np.empty((cfg.window_len, cfg.input_dim))
        filled = 0
        consumed = 0
        label = rec.object_label

        def handle(sample, consumed):
            nonlocal filled, warmup
            window[:-1] = window[1:]
            window[-1] = assemble_features(sample.positions, sample.velocity, cfg.feature_set)
            filled += 1
            if filled < cfg.window_len:
                return
            if warmup is None:
                warmup = consumed
            out = predict(model, window)
            preds.append(out[0])
            trial_ids.append(rec.trial_id)
            end_frames.append(sample.frame_index)
            times.append((seg.grasp_frame - sample.frame_index) / rec.rate_hz * 1000.0)
            distances.append(
                float(np.linalg.norm(sample.raw_positions[11] - rec.object_position))
            )
            if cfg.task.is_classification:
                labels.append(_true_class(cfg.task, label))

        for i in rows:
            consumed += 1
            sample = proc.push(_frame_at(rec, i))
            if sample is not None:
                handle(sample, consumed)
        sample = proc.finish()
        if sample is not None:
            handle(sample, consumed)

    return SimulationResult(
        task=cfg.task,
        window_len=cfg.window_len,
        warmup_frames=warmup if warmup is not None else -1,
        trial_id=np.array(trial_ids, dtype=object),
        end_frame=np.array(end_frames, dtype=np.int64),
        true_time_ms=np.array(times),
        true_distance_mm=np.array(distances),
        predictions=np.array(preds) if preds else np.empty((0, cfg.output_dim)),
        true_labels=np.array(labels, dtype=np.int64) if labels else None,
    )


def _true_class(task: Task, label) -> int:
    if task is Task.SIZE:
        return label.size_class
    if task is Task.SHAPE:
        return label.shape_class
    return label.object_class


def _frame_at(rec: Recording, i: int) -> TrackingFrame:
    idx = int(rec.frame_index[i])
    return TrackingFrame(
        frame_index=idx,
        time_s=idx / rec.rate_hz,
        positions=rec.positions[i],
        touch=(bool(rec.touch[i, 0]), bool(rec.touch[i, 1]), bool(rec.touch[i, 2])),
    )


def measure_latency(model: Model, recording: Recording, num_frames: int = 10_000) -> dict:
    """Per-frame cost of the deployed loop: preprocess, featurize, infer.

    Replays the recording as a loop until num_frames frames are processed and
    times each frame individually with a monotonic clock.
    """
    cfg = model.config
    proc = StreamProcessor(fir=design_lowpass_fir(), rate_hz=float(recording.rate_hz))
    window = np.empty((cfg.window_len, cfg.input_dim))
    filled = 0
    n = recording.num_frames
    per_frame = np.empty(num_frames)
    for k in range(num_frames):
        i = k % n
        frame = _frame_at(recording, i)
        t0 = time.perf_counter()
        sample = proc.push(frame)
        if sample is not None:
            window[:-1] = window[1:]
            window[-1] = assemble_features(sample.positions, sample.velocity, cfg.feature_set)
            filled += 1
            if filled >= cfg.window_len:
                predict(model, window)
        per_frame[k] = time.perf_counter() - t0
    return {
        "frames": num_frames,
        "mean_ms": float(per_frame.mean() * 1000.0),
        "p95_ms": float(np.percentile(per_frame, 95) * 1000.0),
        "max_ms": float(per_frame.max() * 1000.0),
    }
