"""Sliding-window dataset construction, balancing, normalization and splits."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .features import FeatureSet, TrialFeatures
from .tasks import Task

DEFAULT_WINDOW_LEN = 25
DEFAULT_TARGET_COUNT = 35_000
BALANCE_TOLERANCE = 0.05


@dataclass
class NormStats:
    """Z-score statistics, always computed from training data only."""

    feature_mean: np.ndarray      # (D,)
    feature_std: np.ndarray       # (D,), constant features pinned to 1
    target_mean: np.ndarray       # (O,), zeros for classification
    target_std: np.ndarray        # (O,), ones for classification
    constant_features: np.ndarray  # (D,) bool

    def apply_features(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def apply_targets(self, y: np.ndarray) -> np.ndarray:
        return (y - self.target_mean) / self.target_std

    def invert_targets(self, y: np.ndarray) -> np.ndarray:
        return y * self.target_std + self.target_mean


def compute_norm_stats(
    x: np.ndarray, y: np.ndarray | None = None, output_dim: int | None = None
) -> NormStats:
    """Per-dimension statistics over every frame of the given windows.

    y is None for classification; pass output_dim so the stats still carry
    identity target scaling of the right width.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    constant = std < 1e-12
    std = np.where(constant, 1.0, std)
    if y is not None:
        y = np.asarray(y, dtype=np.float64)
        t_mean = y.mean(axis=0)
        t_std = y.std(axis=0)
        t_std = np.where(t_std < 1e-12, 1.0, t_std)
    else:
        if output_dim is None:
            raise ValueError("output_dim required when no targets are given")
        t_mean = np.zeros(output_dim)
        t_std = np.ones(output_dim)
    return NormStats(
        feature_mean=mean,
        feature_std=std,
        target_mean=t_mean,
        target_std=t_std,
        constant_features=constant,
    )


@dataclass
class WindowDataset:
    """Sliding windows over many trials, with per-window labels and metadata.

    Feature arrays stay in the trials; windows are materialized on demand so
    several feature sets can share one dataset.
    """

    trials: list[TrialFeatures]
    window_len: int
    stride: int
    trial_index: np.ndarray       # (n,) int32, row into trials
    start_row: np.ndarray         # (n,) int32, first feature row of the window
    end_frame: np.ndarray         # (n,) int64, frame index of the last row
    distance_mm: np.ndarray       # (n,)
    time_ms: np.ndarray           # (n,)
    object_class: np.ndarray      # (n,) int32
    size_class: np.ndarray        # (n,) int32, -1 for real objects
    shape_class: np.ndarray       # (n,) int32, -1 for real objects
    user_id: np.ndarray           # (n,) str
    session_id: np.ndarray        # (n,) str
    trial_id: np.ndarray          # (n,) str
    shortfall: bool = False

    def __len__(self) -> int:
        return self.trial_index.shape[0]

    def materialize(
        self, feature_set: FeatureSet, indices: np.ndarray | None = None
    ) -> np.ndarray:
        """Gather windows into an (m, window_len, dim) float64 array."""
        if indices is None:
            indices = np.arange(len(self))
        dim = feature_set.dim
        out = np.empty((indices.shape[0], self.window_len, dim))
        for row, w in enumerate(indices):
            trial = self.trials[self.trial_index[w]]
            s = self.start_row[w]
            out[row] = trial.features[s : s + self.window_len, :dim]
        return out

    def targets(self, task: Task, indices: np.ndarray | None = None) -> np.ndarray:
        """Regression targets as (m, O) floats, class labels as (m,) ints."""
        if indices is None:
            indices = np.arange(len(self))
        if task is Task.DISTANCE:
            return self.distance_mm[indices, None].copy()
        if task is Task.TIME:
            return self.time_ms[indices, None].copy()
        if task is Task.MERGED:
            return np.stack([self.distance_mm[indices], self.time_ms[indices]], axis=1)
        labels = {
            Task.OBJECT_REAL: self.object_class,
            Task.OBJECT_SYNTH: self.object_class,
            Task.SIZE: self.size_class,
            Task.SHAPE: self.shape_class,
        }[task][indices]
        if np.any(labels < 0):
            raise ValueError(f"task {task.value} undefined for some windows")
        return labels.astype(np.int64)

    def group_values(self, key: str) -> np.ndarray:
        return {"user": self.user_id, "session": self.session_id,
                "object": self.object_class, "trial": self.trial_id}[key]


def _window_starts(num_rows: int, window_len: int, stride: int) -> np.ndarray:
    """Window start rows anchored at the trial end, so the last window always
    finishes on the final movement sample (the frames closest to the grasp)."""
    if num_rows < window_len:
        return np.empty(0, dtype=np.int64)
    last = num_rows - window_len
    return np.arange(last % stride, last + 1, stride, dtype=np.int64)


def make_windows(
    trial: TrialFeatures, window_len: int, stride: int = 1
) -> np.ndarray:
    """Start rows of every full-length window inside a trial's movement phase."""
    if window_len < 1 or stride < 1:
        raise ValueError("window_len and stride must be positive")
    return _window_starts(trial.num_samples, window_len, stride)


def _count_for_stride(row_counts: np.ndarray, window_len: int, stride: int) -> int:
    usable = row_counts[row_counts >= window_len]
    return int(np.sum((usable - window_len) // stride + 1))


def build_windows(
    trials: list[TrialFeatures],
    window_len: int = DEFAULT_WINDOW_LEN,
    stride: int = 1,
    shortfall: bool = False,
    subset: np.ndarray | None = None,
) -> WindowDataset:
    """Slice every trial at a fixed stride and assemble the label arrays."""
    rows = []
    for t_idx, trial in enumerate(trials):
        for s in _window_starts(trial.num_samples, window_len, stride):
            rows.append((t_idx, int(s)))
    if subset is not None:
        rows = [rows[i] for i in subset]
    n = len(rows)
    trial_index = np.array([r[0] for r in rows], dtype=np.int32)
    start_row = np.array([r[1] for r in rows], dtype=np.int32)

    end_frame = np.empty(n, dtype=np.int64)
    distance = np.empty(n)
    time_ms = np.empty(n)
    object_class = np.empty(n, dtype=np.int32)
    size_class = np.empty(n, dtype=np.int32)
    shape_class = np.empty(n, dtype=np.int32)
    user_id = np.empty(n, dtype=object)
    session_id = np.empty(n, dtype=object)
    trial_id = np.empty(n, dtype=object)
    for w in range(n):
        trial = trials[trial_index[w]]
        end_row = start_row[w] + window_len - 1
        end_frame[w] = trial.frame_index[end_row]
        distance[w] = trial.distance_to_object_mm(end_row)
        time_ms[w] = trial.time_to_grasp_ms(end_row)
        object_class[w] = trial.object_class
        size_class[w] = trial.size_class
        shape_class[w] = trial.shape_class
        user_id[w] = trial.user_id
        session_id[w] = trial.session_id
        trial_id[w] = trial.trial_id
    return WindowDataset(
        trials=trials,
        window_len=window_len,
        stride=stride,
        trial_index=trial_index,
        start_row=start_row,
        end_frame=end_frame,
        distance_mm=distance,
        time_ms=time_ms,
        object_class=object_class,
        size_class=size_class,
        shape_class=shape_class,
        user_id=user_id,
        session_id=session_id,
        trial_id=trial_id,
        shortfall=shortfall,
    )


def balance_windows(
    trials: list[TrialFeatures],
    window_len: int = DEFAULT_WINDOW_LEN,
    target_count: int = DEFAULT_TARGET_COUNT,
    seed: int = 0,
) -> WindowDataset:
    """Pick the stride whose total window count lands closest to target_count.

    Dense trials would otherwise dominate the dataset; a common stride keeps
    every trial's share proportional to its duration. If even one window per
    trial overshoots the target, a seeded subsample trims the excess; if
    stride 1 cannot reach 95% of the target, the dataset is built anyway and
    flagged via .shortfall.
    """
    if target_count < 1:
        raise ValueError("target_count must be positive")
    row_counts = np.array([t.num_samples for t in trials])
    max_count = _count_for_stride(row_counts, window_len, 1)
    if max_count == 0:
        raise ValueError("no trial is long enough for the window length")
    if max_count < target_count * (1.0 - BALANCE_TOLERANCE):
        return build_windows(trials, window_len, stride=1, shortfall=True)

    best_stride, best_gap = 1, abs(max_count - target_count)
    stride, count = 1, max_count
    while count > target_count:
        stride += 1
        count = _count_for_stride(row_counts, window_len, stride)
        gap = abs(count - target_count)
        if gap < best_gap:
            best_stride, best_gap = stride, gap
        if count <= len(trials):
            break
    ds = build_windows(trials, window_len, stride=best_stride)
    if len(ds) > target_count * (1.0 + BALANCE_TOLERANCE):
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(ds), size=target_count, replace=False))
        ds = build_windows(trials, window_len, stride=best_stride, subset=keep)
    return ds


def split_kfold(num_items: int, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold index split with near-equal part sizes."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if num_items < k:
        raise ValueError(f"cannot split {num_items} items into {k} folds")
    perm = np.random.default_rng(seed).permutation(num_items)
    sizes = np.full(k, num_items // k)
    sizes[: num_items % k] += 1
    folds = []
    offset = 0
    for size in sizes:
        val = perm[offset : offset + size]
        train = np.concatenate([perm[:offset], perm[offset + size :]])
        folds.append((np.sort(train), np.sort(val)))
        offset += size
    return folds


def split_leave_one_group_out(
    groups: np.ndarray,
) -> list[tuple[object, np.ndarray, np.ndarray]]:
    """One fold per distinct group value: that group validates, the rest train."""
    groups = np.asarray(groups)
    values = sorted(set(groups.tolist()))
    if len(values) < 2:
        raise ValueError("need at least 2 groups to hold one out")
    folds = []
    for value in values:
        val = np.flatnonzero(groups == value)
        train = np.flatnonzero(groups != value)
        folds.append((value, train, val))
    return folds


def write_window_manifest(ds: WindowDataset) -> str:
    """Window metadata as CSV text: who, which trial, which rows, which labels."""
    out = io.StringIO()
    out.write(
        "user,session,trial,object,end_frame,distance_mm,time_ms,"
        "object_class,size_class,shape_class,source,offset\n"
    )
    for w in range(len(ds)):
        trial = ds.trials[ds.trial_index[w]]
        out.write(
            f"{ds.user_id[w]},{ds.session_id[w]},{ds.trial_id[w]},{trial.object_token},"
            f"{int(ds.end_frame[w])},{ds.distance_mm[w]:.4f},{ds.time_ms[w]:.4f},"
            f"{int(ds.object_class[w])},{int(ds.size_class[w])},{int(ds.shape_class[w])},"
            f"{ds.trial_id[w]}.csv,{int(ds.start_row[w])}\n"
        )
    return out.getvalue()
