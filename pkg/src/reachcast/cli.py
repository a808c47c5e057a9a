"""Command-line entry point: synthesis, training, evaluation, transfer,
streaming prediction and filter inspection.

All flags are long-form `--key value`. Subcommands that write results take
`--out DIR` and echo their options into `DIR/config.txt` so a run can be
reproduced from its artifacts alone. Exit codes: 0 success, 1 usage error,
2 data or validation error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .capture import (
    NUM_SENSORS,
    RATE_HZ,
    RecordingError,
    SegmentationError,
    TrackingFrame,
    parse_recording,
    segment_r2g,
    validate_recording,
    write_recording_file,
)
from .dataset import (
    DEFAULT_TARGET_COUNT,
    WindowDataset,
    balance_windows,
    build_windows,
    compute_norm_stats,
)
from .evaluation import (
    PROTOCOLS,
    SimulationResult,
    curves_jsonl,
    run_protocol,
    run_transfer,
    simulate_runtime,
)
from .features import FeatureSet, assemble_features, extract_trial_features
from .neural import (
    Model,
    ModelConfig,
    ModelFormatError,
    init_model,
    predict,
    save_model_file,
    load_model_file,
    train,
)
from .preprocessing import StreamProcessor, design_lowpass_fir
from .synthgen import GenConfig, corpus_size, generate_corpus
from .tasks import Task

_FRAME_COLUMNS = 4 + NUM_SENSORS * 3


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.run(args)
    except (RecordingError, SegmentationError, ModelFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reachcast",
        description="Grasp prediction from streamed hand tracking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    task_names = [t.value for t in Task]
    feature_names = [f.value for f in FeatureSet]

    def add_training_options(p, with_protocol=False):
        p.add_argument("--data", required=True, help="directory of recording CSV files")
        p.add_argument("--task", choices=task_names, default=Task.MERGED.value)
        p.add_argument("--features", choices=feature_names, default=FeatureSet.VH_FP.value)
        p.add_argument("--window", type=int, default=25, help="window length in samples")
        p.add_argument("--stride", type=int, default=1,
                       help="window stride when --target-count is 0")
        p.add_argument("--target-count", type=int, default=DEFAULT_TARGET_COUNT,
                       help="balance total windows near this count (0 keeps every window)")
        p.add_argument("--hidden", type=int, default=0,
                       help="LSTM width (0 picks the task default)")
        p.add_argument("--epochs", type=int, default=60)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--dropout", type=float, default=0.2)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        if with_protocol:
            p.add_argument("--protocol", choices=list(PROTOCOLS), default="kfold")
            p.add_argument("--k", type=int, default=4, help="folds for the kfold protocol")
            p.add_argument("--threads", type=int, default=0,
                           help="parallel fold jobs (0 defers to REACHCAST_THREADS)")

    p = sub.add_parser("synth", help="generate a synthetic recording corpus")
    p.add_argument("--users", type=int, default=16)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--set", choices=["synthetic", "real", "both"], default="synthetic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.3, help="sensor noise in mm")
    p.add_argument("--dropout-prob", type=float, default=0.0,
                   help="per-frame dropped-frame probability")
    p.add_argument("--out", required=True)
    p.set_defaults(run=_cmd_synth)

    p = sub.add_parser("train", help="train one model on every window of a corpus")
    add_training_options(p)
    p.set_defaults(run=_cmd_train)

    p = sub.add_parser("eval", help="cross-validated evaluation of one task cell")
    add_training_options(p, with_protocol=True)
    p.add_argument("--simulate-data", default="",
                   help="directory of held-out recordings to stream for error curves")
    p.set_defaults(run=_cmd_eval)

    p = sub.add_parser("transfer", help="leave one user out, then adapt on small samples")
    add_training_options(p)
    p.add_argument("--user", required=True, help="user id held out and adapted to")
    p.add_argument("--sizes", default="50,150,250",
                   help="comma-separated adaptation set sizes")
    p.add_argument("--transfer-epochs", type=int, default=50)
    p.set_defaults(run=_cmd_transfer)

    p = sub.add_parser("predict", help="stream frames from stdin to prediction lines")
    p.add_argument("--model", required=True, help="model file path")
    p.add_argument("--rate", type=float, default=float(RATE_HZ), help="frame rate in Hz")
    p.set_defaults(run=_cmd_predict)

    p = sub.add_parser("features", help="dump per-frame feature rows for one recording")
    p.add_argument("--input", required=True, help="recording CSV file")
    p.add_argument("--features", choices=feature_names, default=FeatureSet.VH_FP_PP.value)
    p.add_argument("--out", default="", help="output file (default: standard output)")
    p.set_defaults(run=_cmd_features)

    p = sub.add_parser("filter", help="print low-pass filter taps and response")
    p.add_argument("--order", type=int, default=25)
    p.add_argument("--cutoff", type=float, default=25.0, help="cutoff frequency in Hz")
    p.add_argument("--rate", type=float, default=float(RATE_HZ), help="sample rate in Hz")
    p.set_defaults(run=_cmd_filter)

    return parser


def _write_config(out_dir: Path, args) -> None:
    lines = [f"command={args.command}"]
    for key in sorted(vars(args)):
        if key in ("command", "run"):
            continue
        lines.append(f"{key.replace('_', '-')}={getattr(args, key)}")
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", encoding="ascii")


def _load_corpus(data_dir: str):
    root = Path(data_dir)
    if not root.is_dir():
        raise ValueError(f"not a directory: {data_dir}")
    recordings = []
    skipped = 0
    for path in sorted(root.glob("*.csv")):
        if path.name == "manifest.csv":
            continue
        rec = parse_recording(path.read_text(encoding="ascii"))
        report = validate_recording(rec)
        if report.excluded:
            print(f"skipping {path.name}: {report.reason.value}", file=sys.stderr)
            skipped += 1
            continue
        recordings.append(rec)
    if not recordings:
        raise ValueError(f"no usable recordings in {data_dir}")
    if skipped:
        print(f"{skipped} recording(s) excluded", file=sys.stderr)
    return recordings


def _build_dataset(args, recordings) -> WindowDataset:
    fir = design_lowpass_fir()
    trials = [extract_trial_features(r, segment_r2g(r), fir=fir) for r in recordings]
    if args.target_count > 0:
        return balance_windows(trials, args.window, args.target_count, seed=args.seed)
    return build_windows(trials, args.window, stride=max(args.stride, 1))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, args)
    return out


def _cmd_synth(args) -> int:
    out = _out_dir(args)
    config = GenConfig(
        users=args.users,
        reps=args.reps,
        object_set=args.set,
        seed=args.seed,
        noise_mm=args.noise_std,
        dropout_p=args.dropout_prob,
    )
    rows = ["user,session,trial,object,frames,file"]
    for trial in generate_corpus(config):
        rec = trial.recording
        name = f"{rec.trial_id}.csv"
        write_recording_file(rec, out / name)
        rows.append(
            f"{rec.user_id},{rec.session_id},{rec.trial_id},"
            f"{rec.object_label.to_token()},{rec.num_frames},{name}"
        )
    (out / "manifest.csv").write_text("\n".join(rows) + "\n", encoding="ascii")
    print(f"wrote {corpus_size(config)} recordings to {out}")
    return 0


def _task_and_features(args) -> tuple[Task, FeatureSet]:
    return Task(args.task), FeatureSet(args.features)


def _cmd_train(args) -> int:
    out = _out_dir(args)
    task, feature_set = _task_and_features(args)
    ds = _build_dataset(args, _load_corpus(args.data))
    x = ds.materialize(feature_set)
    y = ds.targets(task)
    if task.is_classification:
        stats = compute_norm_stats(x, output_dim=task.output_dim)
    else:
        stats = compute_norm_stats(x, y)
        y = stats.apply_targets(y)
    config = ModelConfig(
        task=task,
        feature_set=feature_set,
        input_dim=feature_set.dim,
        hidden=args.hidden or task.default_hidden,
        window_len=args.window,
        dropout=args.dropout,
    )
    model = init_model(config, args.seed)
    model.norm = stats
    train(model, stats.apply_features(x), y, epochs=args.epochs, lr=args.lr,
          batch_size=args.batch_size, seed=args.seed)
    save_model_file(model, out / "model.gpm")
    history = model.meta.get("loss_history", [])
    loss_rows = ["epoch,loss"] + [f"{i + 1},{v:.6f}" for i, v in enumerate(history)]
    (out / "loss.csv").write_text("\n".join(loss_rows) + "\n", encoding="ascii")
    last = f"{history[-1]:.6f}" if history else "nan"
    print(f"trained on {len(ds)} windows; final loss {last}; model at {out / 'model.gpm'}")
    return 0


def _cmd_eval(args) -> int:
    out = _out_dir(args)
    task, feature_set = _task_and_features(args)
    ds = _build_dataset(args, _load_corpus(args.data))
    result = run_protocol(
        ds, task, feature_set,
        protocol=args.protocol, k=args.k, seed=args.seed, epochs=args.epochs,
        lr=args.lr, batch_size=args.batch_size, hidden=args.hidden or None,
        dropout=args.dropout, threads=args.threads or None,
    )
    report = result.report
    (out / "report.csv").write_text(report.to_csv(), encoding="ascii")
    save_model_file(result.models[0], out / "model.gpm")
    for name in report.metric_names():
        print(f"{name}: {report.mean(name):.3f} +/- {report.std(name):.3f} "
              f"over {len(report.folds)} folds")
    if args.simulate_data:
        sim = simulate_runtime(result.models[0], _load_corpus(args.simulate_data))
        (out / "curves.jsonl").write_text(_sim_curves(sim), encoding="ascii")
        print(f"simulated {len(sim)} predictions; curves at {out / 'curves.jsonl'}")
    return 0


def _sim_curves(sim: SimulationResult) -> str:
    if sim.task.is_classification:
        metrics = ["accuracy_pct"]
    else:
        metrics = [f"mae_{name}" for name in sim.task.output_names]
    named = {}
    for axis in ("time", "distance"):
        for metric in metrics:
            named[f"{axis}/{metric}"] = sim.curve(axis, metric)
    return curves_jsonl(named)


def _cmd_transfer(args) -> int:
    out = _out_dir(args)
    task, feature_set = _task_and_features(args)
    sizes = tuple(int(s) for s in args.sizes.split(",") if s)
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError(f"bad --sizes value {args.sizes!r}")
    ds = _build_dataset(args, _load_corpus(args.data))
    report = run_transfer(
        ds, task, feature_set, args.user, sizes=sizes, seed=args.seed,
        epochs=args.epochs, transfer_epochs=args.transfer_epochs, lr=args.lr,
        batch_size=args.batch_size, hidden=args.hidden or None, dropout=args.dropout,
    )
    (out / "report.csv").write_text(report.to_csv(), encoding="ascii")
    for row in report.rows:
        label = "baseline" if row.size == 0 else f"size {row.size}"
        stats = ", ".join(f"{k} {v:.3f}" for k, v in row.metrics.items())
        print(f"{label}: {stats}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model_file(args.model)
    return _predict_stream(model, sys.stdin, sys.stdout, sys.stderr, args.rate)


def _parse_frame_line(line: str) -> TrackingFrame | None:
    parts = line.split(",")
    if len(parts) != _FRAME_COLUMNS:
        return None
    try:
        frame = int(parts[0])
        touch = tuple(int(v) for v in parts[1:4])
        coords = np.array([float(v) for v in parts[4:]], dtype=np.float64)
    except ValueError:
        return None
    if any(t not in (0, 1) for t in touch):
        return None
    return TrackingFrame(
        frame_index=frame,
        time_s=0.0,
        positions=coords.reshape(NUM_SENSORS, 3),
        touch=(bool(touch[0]), bool(touch[1]), bool(touch[2])),
    )


def _predict_stream(model: Model, fin, fout, ferr, rate_hz: float) -> int:
    cfg = model.config
    proc = StreamProcessor(fir=design_lowpass_fir(), rate_hz=rate_hz)
    window = np.empty((cfg.window_len, cfg.input_dim))
    filled = 0
    frames = predictions = malformed = 0
    total_s = 0.0
    max_s = 0.0

    def emit(sample) -> None:
        nonlocal filled, predictions
        window[:-1] = window[1:]
        window[-1] = assemble_features(sample.positions, sample.velocity, cfg.feature_set)
        filled += 1
        if filled < cfg.window_len:
            return
        out = predict(model, window)[0]
        if cfg.task.is_classification:
            top = int(out.argmax())
            probs = ",".join(f"{p:.6f}" for p in out)
            fout.write(f"{sample.frame_index},{top},{100.0 * out[top]:.2f},{probs}\n")
        else:
            values = ",".join(f"{v:.3f}" for v in out)
            fout.write(f"{sample.frame_index},{values}\n")
        predictions += 1

    for line in fin:
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("frame"):
            continue
        started = time.perf_counter()
        frame = _parse_frame_line(line)
        if frame is None:
            malformed += 1
            print(f"skipping malformed row: {line[:60]}", file=ferr)
            continue
        sample = proc.push(frame)
        if sample is not None:
            emit(sample)
        elapsed = time.perf_counter() - started
        total_s += elapsed
        max_s = max(max_s, elapsed)
        frames += 1
    sample = proc.finish()
    if sample is not None:
        emit(sample)

    if predictions == 0:
        warmup = proc.fir.order + cfg.window_len + 1
        print(f"warm-up not reached: {frames} frames < {warmup} required "
              f"before the first prediction", file=ferr)
    if frames:
        print(f"processed {frames} frames ({malformed} skipped), "
              f"{predictions} predictions; per-frame latency "
              f"mean {1000.0 * total_s / frames:.3f} ms, max {1000.0 * max_s:.3f} ms",
              file=ferr)
    return 0


def _cmd_features(args) -> int:
    rec = parse_recording(Path(args.input).read_text(encoding="ascii"))
    feature_set = FeatureSet(args.features)
    trial = extract_trial_features(rec, segment_r2g(rec))
    names = ["v"]
    if feature_set is not FeatureSet.VH:
        names += [f"fp{i}_{c}" for i in range(5) for c in "xyz"]
    if feature_set is FeatureSet.VH_FP_PP:
        names += [f"pp{i}_{c}" for i in range(5) for c in "xyz"]
    lines = ["frame," + ",".join(names)]
    rows = trial.features[:, :feature_set.dim]
    for i in range(trial.num_samples):
        values = ",".join(f"{v:.6f}" for v in rows[i])
        lines.append(f"{int(trial.frame_index[i])},{values}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="ascii")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_filter(args) -> int:
    if args.rate <= 0:
        raise ValueError("--rate must be positive")
    fir = design_lowpass_fir(order=args.order, cutoff_hz=args.cutoff, rate_hz=args.rate)
    print(f"# order {fir.order}, cutoff {args.cutoff:g} Hz, rate {args.rate:g} Hz, "
          f"group delay {fir.group_delay:g} samples")
    for i, tap in enumerate(fir.taps):
        print(f"{i},{tap:.17g}")
    print("hz,db")
    freqs = np.arange(0.0, args.rate / 2.0 + 1e-9, 10.0)
    for hz, db in zip(freqs, fir.response_db(freqs)):
        print(f"{hz:g},{db:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
