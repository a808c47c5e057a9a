"""Command-line interface: exit codes, artifacts, and the streaming predictor."""

import io
import json

import numpy as np
import pytest

from reachcast.capture import parse_recording
from reachcast.cli import main
from reachcast.neural import load_model_file
from reachcast.tasks import Task


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    rc = main(["synth", "--users", "2", "--reps", "1", "--set", "synthetic",
               "--seed", "3", "--out", str(out)])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    rc = main(["train", "--data", str(corpus_dir), "--out", str(out),
               "--task", "distance", "--features", "vh", "--window", "25",
               "--target-count", "0", "--stride", "40",
               "--hidden", "8", "--epochs", "1", "--seed", "0"])
    assert rc == 0
    return out


def recording_files(corpus_dir):
    return sorted(p for p in corpus_dir.glob("*.csv") if p.name != "manifest.csv")


class TestUsageErrors:
    def test_no_arguments(self, capsys):
        assert main([]) == 1
        capsys.readouterr()

    def test_unknown_subcommand(self, capsys):
        assert main(["bogus"]) == 1
        capsys.readouterr()

    def test_help_exits_clean(self, capsys):
        assert main(["--help"]) == 0
        assert "reachcast" in capsys.readouterr().out

    def test_missing_required_flag(self, capsys):
        assert main(["synth"]) == 1
        capsys.readouterr()

    def test_data_errors_exit_two(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(["train", "--data", str(empty), "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

        rc = main(["train", "--data", str(tmp_path / "missing"),
                   "--out", str(tmp_path / "out2")])
        assert rc == 2
        capsys.readouterr()

    def test_corrupt_model_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.gpm"
        bad.write_bytes(b"not a model at all")
        assert main(["predict", "--model", str(bad)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_model_exits_two(self, tmp_path, capsys):
        assert main(["predict", "--model", str(tmp_path / "none.gpm")]) == 2
        capsys.readouterr()


class TestFilter:
    def test_taps_and_response_table(self, capsys):
        assert main(["filter"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("# order 25, cutoff 25 Hz, rate 960 Hz")
        assert "group delay 12.5 samples" in lines[0]
        taps = lines[1:27]
        assert [int(t.split(",")[0]) for t in taps] == list(range(26))
        total = sum(float(t.split(",")[1]) for t in taps)
        assert total == pytest.approx(1.0, abs=1e-9)
        header_at = lines.index("hz,db")
        table = lines[header_at + 1:]
        assert table[0].startswith("0,")
        assert len(table) == 49
        assert float(table[0].split(",")[1]) == pytest.approx(0.0, abs=0.01)

    def test_bad_rate_exits_two(self, capsys):
        assert main(["filter", "--rate", "0"]) == 2
        capsys.readouterr()


class TestSynth:
    def test_writes_corpus_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "c"
        rc = main(["synth", "--users", "1", "--reps", "1", "--set", "synthetic",
                   "--seed", "9", "--out", str(out)])
        assert rc == 0
        assert "wrote 9 recordings" in capsys.readouterr().out

        files = recording_files(out)
        assert len(files) == 9
        manifest = (out / "manifest.csv").read_text().splitlines()
        assert manifest[0] == "user,session,trial,object,frames,file"
        assert len(manifest) == 10
        for row in manifest[1:]:
            fields = row.split(",")
            assert fields[0] == "u00"
            assert (out / fields[5]).exists()

        rec = parse_recording(files[0].read_text())
        assert rec.user_id == "u00"
        assert rec.num_frames == int(
            next(r.split(",")[4] for r in manifest[1:]
                 if r.split(",")[5] == files[0].name))

    def test_config_is_sorted_key_values(self, tmp_path, capsys):
        out = tmp_path / "c"
        main(["synth", "--users", "1", "--reps", "1", "--out", str(out)])
        capsys.readouterr()
        lines = (out / "config.txt").read_text().splitlines()
        assert lines[0] == "command=synth"
        keys = [line.split("=")[0] for line in lines[1:]]
        assert keys == sorted(keys)
        assert "users=1" in lines
        assert "noise-std=0.3" in lines
        assert all("_" not in k for k in keys)


class TestFeatures:
    def test_full_feature_dump(self, corpus_dir, capsys):
        path = recording_files(corpus_dir)[0]
        assert main(["features", "--input", str(path)]) == 0
        lines = capsys.readouterr().out.splitlines()
        header = lines[0].split(",")
        assert header[:2] == ["frame", "v"]
        assert len(header) == 32
        assert header[2] == "fp0_x" and header[-1] == "pp4_z"
        first = lines[1].split(",")
        assert len(first) == 32
        float(first[1])

    def test_vh_only_dump(self, corpus_dir, capsys):
        path = recording_files(corpus_dir)[0]
        assert main(["features", "--input", str(path), "--features", "vh"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "frame,v"
        assert all(len(line.split(",")) == 2 for line in lines[1:])

    def test_out_file(self, corpus_dir, tmp_path, capsys):
        path = recording_files(corpus_dir)[0]
        dest = tmp_path / "features.csv"
        assert main(["features", "--input", str(path), "--out", str(dest)]) == 0
        assert capsys.readouterr().out == ""
        assert dest.read_text().startswith("frame,v,")

    def test_missing_input_exits_two(self, tmp_path, capsys):
        rc = main(["features", "--input", str(tmp_path / "none.csv")])
        assert rc == 2
        capsys.readouterr()


class TestTrain:
    def test_artifacts(self, trained_dir, capsys):
        capsys.readouterr()
        assert (trained_dir / "model.gpm").exists()
        assert (trained_dir / "config.txt").exists()
        loss_lines = (trained_dir / "loss.csv").read_text().splitlines()
        assert loss_lines[0] == "epoch,loss"
        assert len(loss_lines) == 2
        epoch, value = loss_lines[1].split(",")
        assert epoch == "1"
        assert np.isfinite(float(value))

        model = load_model_file(trained_dir / "model.gpm")
        assert model.config.task is Task.DISTANCE
        assert model.config.window_len == 25
        assert model.config.hidden == 8
        assert model.norm is not None

    def test_config_echoes_options(self, trained_dir):
        lines = (trained_dir / "config.txt").read_text().splitlines()
        assert lines[0] == "command=train"
        assert "task=distance" in lines
        assert "features=vh" in lines
        assert "target-count=0" in lines
        assert "stride=40" in lines


class TestEval:
    def test_kfold_report_and_simulation(self, corpus_dir, tmp_path, capsys):
        sim_dir = tmp_path / "held"
        sim_dir.mkdir()
        for path in recording_files(corpus_dir)[:2]:
            (sim_dir / path.name).write_text(path.read_text())

        out = tmp_path / "eval"
        rc = main(["eval", "--data", str(corpus_dir), "--out", str(out),
                   "--task", "distance", "--features", "vh",
                   "--target-count", "0", "--stride", "40",
                   "--protocol", "kfold", "--k", "2",
                   "--hidden", "8", "--epochs", "1",
                   "--simulate-data", str(sim_dir)])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "mae_distance_mm:" in stdout
        assert "over 2 folds" in stdout
        assert "simulated" in stdout

        report = (out / "report.csv").read_text().splitlines()
        assert report[0] == "protocol,task,features,window,fold,metric,value"
        assert sum(",mean,mae_distance_mm," in r for r in report) == 1
        assert (out / "model.gpm").exists()

        curves = [json.loads(line)
                  for line in (out / "curves.jsonl").read_text().splitlines()]
        assert curves
        assert {c["axis"] for c in curves} == {"time", "distance"}
        assert all(c["metric"] == "mae_distance_mm" for c in curves)

    def test_unknown_protocol_is_usage_error(self, corpus_dir, tmp_path, capsys):
        rc = main(["eval", "--data", str(corpus_dir), "--out", str(tmp_path / "x"),
                   "--protocol", "loo"])
        assert rc == 1
        capsys.readouterr()


class TestTransfer:
    def test_report_rows(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "transfer"
        rc = main(["transfer", "--data", str(corpus_dir), "--out", str(out),
                   "--task", "distance", "--features", "vh", "--user", "u00",
                   "--sizes", "8,16", "--target-count", "0", "--stride", "40",
                   "--hidden", "8", "--epochs", "1", "--transfer-epochs", "1"])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "baseline:" in stdout
        assert "size 8:" in stdout
        assert "size 16:" in stdout
        report = (out / "report.csv").read_text().splitlines()
        folds = [r.split(",")[4] for r in report[1:]]
        assert folds == ["u00/0", "u00/8", "u00/16"]

    def test_bad_sizes_exit_two(self, corpus_dir, tmp_path, capsys):
        rc = main(["transfer", "--data", str(corpus_dir),
                   "--out", str(tmp_path / "x"), "--user", "u00",
                   "--sizes", "0,10"])
        assert rc == 2
        capsys.readouterr()


def run_predict(monkeypatch, capsys, model_path, text, rate=None):
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    args = ["predict", "--model", str(model_path)]
    if rate is not None:
        args += ["--rate", str(rate)]
    rc = main(args)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestPredict:
    def test_short_stream_warns_and_emits_nothing(self, trained_dir, corpus_dir,
                                                  monkeypatch, capsys):
        body = [line for line in
                recording_files(corpus_dir)[0].read_text().splitlines()
                if not line.startswith("#") and not line.startswith("frame")]
        text = "\n".join(body[:24]) + "\n"
        rc, out, err = run_predict(monkeypatch, capsys,
                                   trained_dir / "model.gpm", text)
        assert rc == 0
        assert out == ""
        assert "warm-up not reached" in err
        assert "24 frames < 51 required" in err

    def test_full_recording_stream(self, trained_dir, corpus_dir,
                                   monkeypatch, capsys):
        path = recording_files(corpus_dir)[0]
        text = path.read_text()
        frames = sum(1 for line in text.splitlines()
                     if line and not line.startswith("#")
                     and not line.startswith("frame"))

        rc, out, err = run_predict(monkeypatch, capsys,
                                   trained_dir / "model.gpm", text)
        assert rc == 0
        lines = out.splitlines()
        # first prediction after 51 frames, one per frame after, one on drain
        assert len(lines) == frames - 49
        assert f"{frames} frames (0 skipped)" in err
        assert f"{len(lines)} predictions" in err
        assert "per-frame latency" in err

        emitted = [int(line.split(",")[0]) for line in lines]
        assert emitted == sorted(emitted)
        for line in lines:
            fields = line.split(",")
            assert len(fields) == 2
            assert np.isfinite(float(fields[1]))

        rc2, out2, _ = run_predict(monkeypatch, capsys,
                                   trained_dir / "model.gpm", text)
        assert rc2 == 0
        assert out2 == out

    def test_malformed_rows_skipped(self, trained_dir, corpus_dir,
                                    monkeypatch, capsys):
        path = recording_files(corpus_dir)[0]
        lines = path.read_text().splitlines()
        lines.insert(len(lines) // 2, "garbage,1,2")
        rc, out, err = run_predict(monkeypatch, capsys,
                                   trained_dir / "model.gpm",
                                   "\n".join(lines) + "\n")
        assert rc == 0
        assert "skipping malformed row" in err
        assert "(1 skipped)" in err
        assert out

    def test_classification_output_format(self, corpus_dir, tmp_path,
                                          monkeypatch, capsys):
        out_dir = tmp_path / "size_model"
        rc = main(["train", "--data", str(corpus_dir), "--out", str(out_dir),
                   "--task", "size", "--features", "vh_fp",
                   "--target-count", "0", "--stride", "40",
                   "--hidden", "8", "--epochs", "1"])
        assert rc == 0
        capsys.readouterr()

        text = recording_files(corpus_dir)[0].read_text()
        rc, out, _ = run_predict(monkeypatch, capsys,
                                 out_dir / "model.gpm", text)
        assert rc == 0
        first = out.splitlines()[0].split(",")
        assert len(first) == 6
        top, conf = int(first[1]), float(first[2])
        probs = np.array([float(v) for v in first[3:]])
        assert probs.sum() == pytest.approx(1.0, abs=1e-4)
        assert top == int(probs.argmax())
        assert conf == pytest.approx(100.0 * probs.max(), abs=0.01)
