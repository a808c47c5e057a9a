"""Grasp prediction from streamed hand tracking.

Converts 960 Hz hand/finger tracking frames into running predictions of the
distance to the to-be-grasped object, the time until the grasp, and the
target object's size, shape, or identity. Ships a causal preprocessing
pipeline, a hand-polygon feature extractor, a from-scratch LSTM with its
training loop, a synthetic reach-to-grasp generator, the evaluation
protocols, and a command-line interface.
"""

from .capture import (
    ObjectLabel,
    PhaseSegment,
    Recording,
    RecordingError,
    SegmentationError,
    TrackingFrame,
    parse_recording,
    segment_r2g,
    validate_recording,
    write_recording,
)
from .dataset import (
    NormStats,
    WindowDataset,
    balance_windows,
    build_windows,
    compute_norm_stats,
    split_kfold,
    split_leave_one_group_out,
)
from .evaluation import (
    CurveBin,
    MetricsReport,
    SimulationResult,
    accuracy,
    confusion,
    mae,
    measure_latency,
    run_protocol,
    run_transfer,
    simulate_runtime,
)
from .features import (
    FeatureSet,
    TrialFeatures,
    assemble_features,
    extract_trial_features,
    grip_aperture,
)
from .neural import (
    Model,
    ModelConfig,
    count_params,
    init_model,
    load_model_file,
    predict,
    save_model_file,
    train,
    transfer_train,
)
from .preprocessing import (
    FirFilter,
    ProcessedSample,
    StreamProcessor,
    design_lowpass_fir,
    preprocess_recording,
    preprocess_stream,
)
from .synthgen import GenConfig, SynthTrial, generate_corpus, generate_trial
from .tasks import Task

__version__ = "0.1.0"

__all__ = [
    "CurveBin",
    "FeatureSet",
    "FirFilter",
    "GenConfig",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "NormStats",
    "ObjectLabel",
    "PhaseSegment",
    "ProcessedSample",
    "Recording",
    "RecordingError",
    "SegmentationError",
    "SimulationResult",
    "StreamProcessor",
    "SynthTrial",
    "Task",
    "TrackingFrame",
    "TrialFeatures",
    "WindowDataset",
    "accuracy",
    "assemble_features",
    "balance_windows",
    "build_windows",
    "compute_norm_stats",
    "confusion",
    "count_params",
    "design_lowpass_fir",
    "extract_trial_features",
    "generate_corpus",
    "generate_trial",
    "grip_aperture",
    "init_model",
    "load_model_file",
    "mae",
    "measure_latency",
    "parse_recording",
    "predict",
    "preprocess_recording",
    "preprocess_stream",
    "run_protocol",
    "run_transfer",
    "save_model_file",
    "segment_r2g",
    "simulate_runtime",
    "split_kfold",
    "split_leave_one_group_out",
    "train",
    "transfer_train",
    "validate_recording",
    "write_recording",
    "__version__",
]
