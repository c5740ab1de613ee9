import csv
import subprocess
import sys

import pytest

from loyalfuse.cli import main

ENDPOINT_ENV = "LOYALFUSE_EMBED_ENDPOINT"


@pytest.fixture(autouse=True)
def no_ambient_endpoint(monkeypatch):
    monkeypatch.delenv(ENDPOINT_ENV, raising=False)


@pytest.fixture()
def review_csv(tmp_path):
    path = tmp_path / "reviews.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "age", "visits", "rating"])
        writer.writerow(["r1", "良い商品です。また買います\n", "30", "4", "7"])
        writer.writerow(["r2", "残念でした😞", "41", "1", "2"])
        writer.writerow(["r3", "普通です。。。", "25", "2", "4"])
    return path


def synth_config(tmp_path, extra="", modalities="[X2]", encoders=""):
    path = tmp_path / "exp.yaml"
    path.write_text(
        "synthetic: {n: 80, j_in: 3, seed: 9}\n"
        f"{'encoders: ' + encoders if encoders else ''}\n"
        "optimizers: [adam]\n"
        f"modalities: {modalities}\n"
        "seeds: [0]\n"
        "train: {batch_size: 16, max_epochs: 4, patience: 4}\n"
        + extra, encoding="utf-8")
    return path


class TestPreprocess:
    def test_cleans_in_place(self, review_csv, tmp_path, capsys):
        out = tmp_path / "clean.csv"
        assert main(["preprocess", "--in", str(review_csv), "--out", str(out)]) == 0
        assert "wrote 3 rows" in capsys.readouterr().out
        with open(out, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["text"] == "良い商品です。また買います。"
        assert rows[1]["text"] == "残念でした。"
        assert rows[2]["text"] == "普通です。"
        assert rows[0]["age"] == "30"  # other columns pass through

    def test_missing_text_column(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,rating\nr1,5\n", encoding="utf-8")
        assert main(["preprocess", "--in", str(bad), "--out", str(tmp_path / "o.csv")]) == 2
        assert "missing 'text'" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["preprocess", "--in", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "o.csv")]) == 2

    @pytest.mark.parametrize("cap", ["0", "600"])
    def test_len_max_bounds(self, review_csv, tmp_path, cap, capsys):
        code = main(["preprocess", "--in", str(review_csv),
                     "--out", str(tmp_path / "o.csv"), "--len-max", cap])
        assert code == 1
        assert "--len-max" in capsys.readouterr().err


class TestEmbed:
    def test_stub_writes_and_prints_checksum(self, review_csv, tmp_path, capsys):
        out = tmp_path / "r.emb"
        assert main(["embed", "--in", str(review_csv), "--provider", "stub",
                     "--d-text", "32", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "wrote 3 x 32 embeddings" in text
        assert "checksum " in text
        assert out.exists()

    def test_checksum_is_reproducible(self, review_csv, tmp_path, capsys):
        sums = []
        for name in ("a.emb", "b.emb"):
            main(["embed", "--in", str(review_csv), "--provider", "stub",
                  "--out", str(tmp_path / name)])
            sums.append([l for l in capsys.readouterr().out.splitlines()
                         if l.startswith("checksum")])
        assert sums[0] == sums[1]

    def test_duplicate_ids(self, tmp_path, capsys):
        bad = tmp_path / "dup.csv"
        bad.write_text("id,text\nr1,a\nr1,b\n", encoding="utf-8")
        assert main(["embed", "--in", str(bad), "--provider", "stub",
                     "--out", str(tmp_path / "o.emb")]) == 2
        assert "duplicate ids" in capsys.readouterr().err

    def test_service_needs_model(self, review_csv, tmp_path, capsys):
        assert main(["embed", "--in", str(review_csv), "--provider", "service",
                     "--endpoint", "http://127.0.0.1:9",
                     "--out", str(tmp_path / "o.emb")]) == 1
        assert "--model" in capsys.readouterr().err

    def test_service_needs_endpoint(self, review_csv, tmp_path, capsys):
        assert main(["embed", "--in", str(review_csv), "--provider", "service",
                     "--model", "bert-base-japanese-v3",
                     "--out", str(tmp_path / "o.emb")]) == 1
        assert ENDPOINT_ENV in capsys.readouterr().err

    def test_endpoint_env_var_is_honored(self, review_csv, tmp_path, monkeypatch, capsys):
        # with the env var set the usage check passes; the dead endpoint is
        # then a runtime failure, not a usage failure
        monkeypatch.setenv(ENDPOINT_ENV, "http://127.0.0.1:9")
        code = main(["embed", "--in", str(review_csv), "--provider", "service",
                     "--model", "bert-base-japanese-v3",
                     "--out", str(tmp_path / "o.emb")])
        assert code == 3
        assert "127.0.0.1:9" in capsys.readouterr().err

    def test_unknown_model_lists_known_ones(self, review_csv, tmp_path, capsys):
        code = main(["embed", "--in", str(review_csv), "--provider", "service",
                     "--model", "bert-huge", "--endpoint", "http://127.0.0.1:9",
                     "--out", str(tmp_path / "o.emb")])
        assert code == 1
        err = capsys.readouterr().err
        for name in ("bert-base-japanese-v3", "bert-base-japanese-char-v3",
                     "bert-large-japanese-v2", "bert-large-japanese-char-v2"):
            assert name in err

    def test_file_provider_needs_emb_in(self, review_csv, tmp_path, capsys):
        assert main(["embed", "--in", str(review_csv), "--provider", "file",
                     "--out", str(tmp_path / "o.emb")]) == 1
        assert "--emb-in" in capsys.readouterr().err

    def test_file_provider_id_mismatch(self, review_csv, tmp_path, capsys):
        other = tmp_path / "other.csv"
        other.write_text("id,text\nzz,hello\n", encoding="utf-8")
        src = tmp_path / "src.emb"
        main(["embed", "--in", str(other), "--provider", "stub", "--out", str(src)])
        capsys.readouterr()
        code = main(["embed", "--in", str(review_csv), "--provider", "file",
                     "--emb-in", str(src), "--out", str(tmp_path / "o.emb")])
        assert code == 2

    def test_bad_d_text_flag(self, review_csv, tmp_path):
        assert main(["embed", "--in", str(review_csv), "--provider", "stub",
                     "--d-text", "0", "--out", str(tmp_path / "o.emb")]) == 1


class TestSynth:
    def test_writes_dataset_and_stats(self, tmp_path, capsys):
        out = tmp_path / "synth.csv"
        assert main(["synth", "--out", str(out), "--n", "50", "--j-in", "3"]) == 0
        text = capsys.readouterr().out
        assert "wrote 50 records" in text
        assert "label_prior=0.5000" in text
        assert "Both=" in text and "X1=" in text and "X2=" in text
        with open(out, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            assert set(reader.fieldnames) == {"id", "text", "f0", "f1", "f2", "rating"}
            assert len(list(reader)) == 50

    @pytest.mark.parametrize("flags", [
        ["--n", "5"],
        ["--a", "0", "--b", "0"],
        ["--noise", "0"],
    ])
    def test_bad_spec_is_usage_error(self, tmp_path, flags, capsys):
        assert main(["synth", "--out", str(tmp_path / "s.csv")] + flags) == 1


class TestTrain:
    def test_single_cell(self, tmp_path, capsys):
        cfg = synth_config(tmp_path)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        line = capsys.readouterr().out
        assert "best_epoch=" in line and "test_acc=" in line
        assert (out / "model.mlp").exists()
        assert (out / "epochs.jsonl").exists()

    def test_ambiguous_axis_needs_flag(self, tmp_path, capsys):
        cfg = synth_config(tmp_path, modalities="[X1, X2]", encoders='["stub:0:16"]')
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 1
        assert "--modality" in capsys.readouterr().err
        assert main(["train", "--config", str(cfg), "--modality", "X2",
                     "--out", str(tmp_path / "r")]) == 0

    def test_missing_config(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "r")]) == 1

    def test_bad_config_key(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("synthetic: {n: 80}\noptimizers: []\nmodalities: [X2]\nseeds: [0]\n")
        assert main(["train", "--config", str(bad), "--out", str(tmp_path / "r")]) == 1


class TestGrid:
    def test_grid_and_reemit(self, tmp_path, capsys):
        cfg = synth_config(tmp_path, modalities="[X1, X2]", encoders='["stub:0:16"]')
        out = tmp_path / "out"
        assert main(["grid", "--config", str(cfg), "--workers", "2",
                     "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "best X1:" in stdout and "best X2:" in stdout
        for name in ("report.md", "result1.csv", "result2_optimizer.csv",
                      "result2_modality.csv", "gridreport.json"):
            assert (out / name).exists()
        assert list((out / "runs").glob("*/epochs.jsonl"))

        redo = tmp_path / "redo"
        assert main(["report", "--in", str(out / "gridreport.json"),
                     "--out", str(redo)]) == 0
        assert (redo / "report.md").read_bytes() == (out / "report.md").read_bytes()

    def test_all_cells_failing_is_runtime_error(self, tmp_path, capsys):
        cfg = synth_config(tmp_path, modalities="[X1]",
                           encoders=f'["file:{tmp_path}/missing.emb"]')
        out = tmp_path / "out"
        assert main(["grid", "--config", str(cfg), "--out", str(out)]) == 3
        assert "all grid cells failed" in capsys.readouterr().err
        # the report is still written so the failure can be inspected
        assert (out / "report.md").exists()

    def test_bad_worker_count(self, tmp_path):
        cfg = synth_config(tmp_path)
        assert main(["grid", "--config", str(cfg), "--workers", "0",
                     "--out", str(tmp_path / "o")]) == 1


class TestReport:
    def test_missing_input(self, tmp_path):
        assert main(["report", "--in", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        assert main(["report", "--in", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "malformed" in capsys.readouterr().err


class TestParser:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0


class TestConsoleScript:
    def test_installed_entry_point(self, tmp_path):
        out = tmp_path / "s.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "loyalfuse.cli", "synth", "--out", str(out),
             "--n", "30"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_exit_code_crosses_process_boundary(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "loyalfuse.cli", "synth",
             "--out", str(tmp_path / "s.csv"), "--n", "3"],
            capture_output=True, text=True)
        assert proc.returncode == 1
        assert "error:" in proc.stderr
