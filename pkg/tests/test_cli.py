import subprocess
import sys

import numpy as np
import pytest

from qot.autograd import Var, no_grad
from qot.harness.cli import main
from qot.harness.synth import load_split
from qot.harness.train import load_model, predict_logits
from qot.harness.tensorio import read_manifest, read_tensor


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--n-train", "4", "--n-test", "3", "--seed", "5"]) == 0
    argv = ["train", "--data", str(root / "data"), "--out", str(root / "run"), "--config", "tiny", "--seed", "1"]
    assert main(argv) == 0
    return root


class TestUsage:
    def test_unknown_flag_exits_2(self):
        proc = subprocess.run([sys.executable, "-m", "qot", "count", "--bogus"], capture_output=True, text=True)
        assert proc.returncode == 2
        assert "usage:" in proc.stderr

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2

    def test_bad_stage_choice(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["train", "--data", "x", "--out", "y", "--stage", "warmup"])
        assert info.value.code == 2
        assert "usage:" in capsys.readouterr().err


class TestCount:
    def test_default_report(self, capsys, tmp_path):
        assert main(["count", "--config", "default", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("# convention:") and "28" in out[0]
        assert out[1] == "layer\tparams\tflops"
        totals = {line.split("\t")[0]: line.split("\t") for line in out}
        assert int(totals["Q-ViT"][1]) == 1_629_703
        assert int(totals["TOTAL"][1]) == int(totals["Q-ViT"][1])
        assert "published" in totals and "param_ratio" in totals
        assert (tmp_path / "costs.png").stat().st_size > 0
        assert (tmp_path / "qvit_costs.tsv").read_text().splitlines()[0] == "layer\tparams\tflops"

    def test_missing_config_file(self, capsys, tmp_path):
        assert main(["count", "--config", str(tmp_path / "none.txt")]) != 0
        assert "error" in capsys.readouterr().err


class TestGradcheck:
    def test_all_pass(self, capsys, tmp_path):
        assert main(["gradcheck", "--out", str(tmp_path)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines and all(line.split("\t")[2] == "PASS" for line in lines)
        assert any(line.startswith("QViTBlock/") for line in lines)
        assert (tmp_path / "gradcheck.tsv").read_text().splitlines() == lines


class TestPipeline:
    def test_synth_layout(self, tiny_run):
        entries = read_manifest(tiny_run / "data" / "train" / "manifest.tsv", num_classes=7)
        assert len(entries) == 28
        assert read_tensor(entries[0].path).shape == (56, 56, 1)

    def test_train_outputs(self, tiny_run):
        run = tiny_run / "run"
        lines = (run / "metrics.tsv").read_text().splitlines()
        assert lines[0] == "epoch\tsplit\tloss\taccuracy"
        assert len(lines) == 1 + 4  # tiny preset: 2 + 2 epochs
        for line in lines[1:]:
            epoch, split, loss, acc = line.split("\t")
            assert split in {"ortho", "train"} and np.isfinite(float(loss)) and 0 <= float(acc) <= 1
        assert (run / "model.qckpt").is_file() and (run / "metrics.png").stat().st_size > 0
        assert "preset" not in (run / "config.txt").read_text()

    def test_eval(self, tiny_run, capsys):
        out = tiny_run / "eval"
        assert main(["eval", "--checkpoint", str(tiny_run / "run" / "model.qckpt"), "--data", str(tiny_run / "data"),
                     "--out", str(out)]) == 0
        first = capsys.readouterr().out.splitlines()[0].split("\t")
        assert first[0] == "accuracy" and first[2].endswith("/21")
        cm = np.loadtxt(out / "confusion.tsv", skiprows=1, dtype=int)[:, 1:]
        assert cm.sum() == 21
        assert float((out / "accuracy.txt").read_text()) == pytest.approx(np.trace(cm) / 21, abs=1e-6)
        assert (out / "confusion.png").stat().st_size > 0

    def test_export_features_reproduce_logits(self, tiny_run):
        out = tiny_run / "feats"
        assert main(["export-features", "--checkpoint", str(tiny_run / "run" / "model.qckpt"),
                     "--data", str(tiny_run / "data"), "--out", str(out)]) == 0
        entries = read_manifest(out / "manifest.tsv", num_classes=7)
        assert len(entries) == 28
        model, _ = load_model(tiny_run / "run" / "model.qckpt")
        feats = np.stack([read_tensor(e.path) for e in entries])
        cfg = model.cfg
        assert feats.shape == (28, cfg.H, cfg.W, cfg.C, 4)
        x, y = load_split(tiny_run / "data" / "train" / "manifest.tsv")
        np.testing.assert_array_equal([e.label for e in entries], y)
        with no_grad():
            from_files = model.qvit(Var(feats)).value
        np.testing.assert_array_equal(from_files, predict_logits(model, x))

    def test_empty_manifest_fails_without_checkpoint(self, tmp_path, capsys):
        (tmp_path / "m.tsv").write_text("")
        assert main(["train", "--data", str(tmp_path / "m.tsv"), "--out", str(tmp_path / "run")]) != 0
        assert "empty" in capsys.readouterr().err
        assert not (tmp_path / "run" / "model.qckpt").exists()

    def test_flag_overrides_recorded(self, tiny_run):
        run = tiny_run / "override"
        assert main(["train", "--data", str(tiny_run / "data"), "--out", str(run), "--config", "tiny",
                     "--lambda", "0.5", "--lr", "0.002", "--epochs", "1", "--stage", "ortho"]) == 0
        text = (run / "config.txt").read_text()
        assert "lam = 0.5" in text and "lr = 0.002" in text
        assert (run / "metrics.tsv").read_text().splitlines()[1].split("\t")[1] == "ortho"
