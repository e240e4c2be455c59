import json

import numpy as np
import pytest

from handtok.cli import main
from handtok.handmodel import save_asset, toy_asset
from handtok.posedata import load_dataset, parse_sequence

TINY = {
    "model": {"d": 16, "gcn_channels": [4, 8], "layers": 1, "heads": 2, "ffn": 32, "frames": 4},
    "pretrain": {"epochs": 1, "batch_size": 4},
    "finetune": {"epochs": 1, "batch_size": 4, "train_per_class": 2},
    "synth": {"class_count": 3, "sequences_per_class": 4, "sequence_length": 10},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "cfg.json").write_text(json.dumps(TINY))
    assert main(["synth", "--config", str(root / "cfg.json"), "--out", str(root / "data")]) == 0
    assert main(["pretrain", "--config", str(root / "cfg.json"), "--data", str(root / "data"),
                 "--out", str(root / "pre.sbc")]) == 0
    return root


class TestSynth:
    def test_files_parse(self, workdir):
        files = sorted((workdir / "data").glob("synth_*.json"))
        assert len(files) == 12
        for f in files:
            parse_sequence(json.loads(f.read_text()))
        manifest = json.loads((workdir / "data" / "manifest.json").read_text())
        assert manifest["count"] == 12 and manifest["classes"] == 3

    def test_same_seed_byte_identical(self, workdir, tmp_path):
        assert main(["synth", "--config", str(workdir / "cfg.json"), "--out", str(tmp_path / "again")]) == 0
        for f in sorted((workdir / "data").glob("*.json")):
            assert (tmp_path / "again" / f.name).read_bytes() == f.read_bytes()

    def test_refuses_non_empty_without_force(self, workdir, tmp_path, capsys):
        (tmp_path / "junk").write_text("x")
        assert main(["synth", "--config", str(workdir / "cfg.json"), "--out", str(tmp_path)]) == 1
        assert "--force" in capsys.readouterr().err
        assert main(["synth", "--config", str(workdir / "cfg.json"), "--out", str(tmp_path), "--force"]) == 0

    def test_seed_override_changes_data(self, workdir, tmp_path):
        main(["synth", "--config", str(workdir / "cfg.json"), "--seed", "8", "--out", str(tmp_path / "s8")])
        a = (workdir / "data" / "synth_c000_s0000.json").read_bytes()
        assert (tmp_path / "s8" / "synth_c000_s0000.json").read_bytes() != a

    def test_asset_without_21_joints_rejected(self, workdir, tmp_path, capsys):
        save_asset(toy_asset(), tmp_path / "toy.hma")
        assert main(["synth", "--config", str(workdir / "cfg.json"), "--asset", str(tmp_path / "toy.hma"),
                     "--out", str(tmp_path / "toy_data")]) == 1
        assert "21-joint" in capsys.readouterr().err

    def test_missing_asset(self, workdir, tmp_path):
        assert main(["synth", "--asset", str(tmp_path / "none.hma"), "--out", str(tmp_path / "o")]) == 1


class TestTraining:
    def test_pretrain_logs_json_lines(self, workdir, tmp_path, capsys):
        assert main(["pretrain", "--config", str(workdir / "cfg.json"), "--data", str(workdir / "data"),
                     "--out", str(tmp_path / "p.sbc")]) == 0
        lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
        assert lines[0]["epoch"] == 0 and "heldout_pck20" in lines[0]

    def test_finetune_and_eval(self, workdir, tmp_path):
        args = ["finetune", "--config", str(workdir / "cfg.json"), "--data", str(workdir / "data"),
                "--checkpoint", str(workdir / "pre.sbc"), "--out", str(tmp_path / "ft.sbc"),
                "--metrics", str(tmp_path / "m.json")]
        assert main(args) == 0
        metrics = json.loads((tmp_path / "m.json").read_text())
        assert metrics["per_class_counts"] == [2, 2, 2]
        assert main(["eval", "--checkpoint", str(tmp_path / "ft.sbc"), "--data", str(workdir / "data"),
                     "--out", str(tmp_path / "e.json")]) == 0
        report = json.loads((tmp_path / "e.json").read_text())
        assert report["per_class_counts"] == [4, 4, 4]

    def test_eval_fusion(self, workdir, tmp_path):
        main(["finetune", "--config", str(workdir / "cfg.json"), "--data", str(workdir / "data"),
              "--out", str(tmp_path / "ft.sbc"), "--metrics", str(tmp_path / "m.json")])
        other = np.zeros((12, 3))
        other[np.arange(12), np.repeat(np.arange(3), 4)] = 1e6  # an oracle second stream
        (tmp_path / "other.json").write_text(json.dumps(other.tolist()))
        assert main(["eval", "--checkpoint", str(tmp_path / "ft.sbc"), "--data", str(workdir / "data"),
                     "--fuse", str(tmp_path / "other.json"), "--out", str(tmp_path / "e.json")]) == 0
        assert json.loads((tmp_path / "e.json").read_text())["fused"]["top1_pi"] == 1.0

    def test_eval_pretrain_checkpoint(self, workdir, tmp_path):
        assert main(["eval", "--checkpoint", str(workdir / "pre.sbc"), "--data", str(workdir / "data"),
                     "--out", str(tmp_path / "r.json")]) == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert 0.0 <= report["input_pck"] <= 1.0 and report["n_joints"] > 0

    def test_reconstruct_dump(self, workdir, tmp_path):
        assert main(["reconstruct", "--checkpoint", str(workdir / "pre.sbc"), "--data", str(workdir / "data"),
                     "--out", str(tmp_path / "rec")]) == 0
        files = sorted((tmp_path / "rec").glob("*.json"))
        assert len(files) == 12
        doc = json.loads(files[0].read_text())
        assert len(doc["frames"]) == 8
        frame = doc["frames"][0]
        assert np.asarray(frame["reconstruction"]).shape == (21, 2)
        assert np.asarray(frame["joints_3d"]).shape == (21, 3)
        assert frame["hand"] == "left" and doc["frames"][4]["hand"] == "right"


class TestErrors:
    def test_missing_checkpoint(self, workdir, capsys):
        assert main(["eval", "--checkpoint", str(workdir / "nope.sbc"), "--data", str(workdir / "data")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_architecture_mismatch(self, workdir, tmp_path, capsys):
        other = dict(TINY, model=dict(TINY["model"], ffn=64))
        (tmp_path / "other.json").write_text(json.dumps(other))
        assert main(["finetune", "--config", str(tmp_path / "other.json"), "--data", str(workdir / "data"),
                     "--checkpoint", str(workdir / "pre.sbc"), "--out", str(tmp_path / "x.sbc")]) == 1
        assert "hash" in capsys.readouterr().err

    def test_bad_config(self, workdir, tmp_path, capsys):
        (tmp_path / "bad.json").write_text(json.dumps({"pretrain": {"lr": "fast"}}))
        assert main(["pretrain", "--config", str(tmp_path / "bad.json"), "--data", str(workdir / "data")]) == 1
        assert "pretrain.lr" in capsys.readouterr().err

    def test_missing_data(self, workdir, tmp_path):
        assert main(["pretrain", "--data", str(tmp_path / "none")]) == 1
        assert main(["pretrain"]) == 1

    def test_reconstruct_needs_pretrain_checkpoint(self, workdir, tmp_path):
        main(["finetune", "--config", str(workdir / "cfg.json"), "--data", str(workdir / "data"),
              "--out", str(tmp_path / "ft.sbc"), "--metrics", str(tmp_path / "m.json")])
        assert main(["reconstruct", "--checkpoint", str(tmp_path / "ft.sbc"), "--data",
                     str(workdir / "data")]) == 1

    def test_bad_pose_json(self, workdir, tmp_path):
        (tmp_path / "d").mkdir()
        (tmp_path / "d" / "a.json").write_text(json.dumps({"source_id": "a", "fps": 25, "label": 0,
                                                           "frames": [{"t": 0, "left": [[0, 0, 1]] * 20}]}))
        assert main(["pretrain", "--data", str(tmp_path / "d")]) == 1

    def test_dataset_loader_used(self, workdir):
        assert len(load_dataset(workdir / "data")) == 12
