import json

import numpy as np
import pytest

from handtok import container
from handtok.checkpoint import (
    Checkpoint, CheckpointError, config_hash, decode_checkpoint, encode_checkpoint, load_checkpoint,
    save_checkpoint,
)
from handtok.config import Config, ConfigError, from_dict, load_config
from handtok.numerics import OptimizerState


def _ckpt(rng):
    opt = OptimizerState(step=7, lr=1e-4, warmup_steps=3)
    opt.m = {"a.w": rng.normal(size=(3, 2)).astype(np.float32)}
    opt.v = {"a.w": rng.random((3, 2)).astype(np.float32)}
    return Checkpoint(
        kind="pretrain", config={"model": {"d": 8}}, config_hash=config_hash({"d": 8}),
        params={"a.w": rng.normal(size=(3, 2)).astype(np.float32), "b": np.arange(4, dtype=np.float32)},
        optimizer=opt, epoch=4, rng_state=np.random.default_rng(1).bit_generator.state, extra={"note": "x"},
    )


class TestCheckpoint:
    def test_bitwise_round_trip(self, rng, tmp_path):
        ckpt = _ckpt(rng)
        save_checkpoint(ckpt, tmp_path / "c.sbc")
        back = load_checkpoint(tmp_path / "c.sbc")
        assert encode_checkpoint(back) == (tmp_path / "c.sbc").read_bytes()
        for k, v in ckpt.params.items():
            assert back.params[k].tobytes() == v.tobytes()
        assert back.optimizer.hyper() == ckpt.optimizer.hyper()
        assert back.optimizer.m["a.w"].tobytes() == ckpt.optimizer.m["a.w"].tobytes()
        assert back.rng_state == ckpt.rng_state
        assert (back.kind, back.epoch, back.extra) == ("pretrain", 4, {"note": "x"})

    def test_rng_state_resumes(self, rng):
        ckpt = _ckpt(rng)
        gen = np.random.default_rng(0)
        gen.bit_generator.state = decode_checkpoint(encode_checkpoint(ckpt)).rng_state
        np.testing.assert_array_equal(gen.random(3), np.random.default_rng(1).random(3))

    def test_hash_mismatch_names_both(self, rng):
        ckpt = _ckpt(rng)
        with pytest.raises(CheckpointError) as info:
            ckpt.verify({"d": 16})
        assert ckpt.config_hash in str(info.value) and config_hash({"d": 16}) in str(info.value)

    def test_hash_is_order_independent(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})

    def test_corrupt_payload(self, rng):
        data = bytearray(encode_checkpoint(_ckpt(rng)))
        with pytest.raises(CheckpointError):
            decode_checkpoint(b"XXXX" + bytes(data[4:]))
        with pytest.raises((CheckpointError, container.ContainerError)):
            decode_checkpoint(bytes(data[:-10]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "none.sbc")

    def test_subset(self, rng):
        ckpt = _ckpt(rng)
        assert set(ckpt.subset("a.")) == {"w"}


class TestConfig:
    def test_defaults(self):
        cfg = from_dict({})
        assert cfg.model.d == 256 and cfg.pretrain.lr == 1e-3 and cfg.pretrain.reg_weight == 0.01
        assert cfg.pretrain.max_masked_joints == 5 and cfg.model.layers == 3

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            from_dict({"model": {"depth": 3}})

    @pytest.mark.parametrize("doc,msg", [
        ({"model": {"d": "big"}}, "integer"),
        ({"pretrain": {"lr": True}}, "number"),
        ({"model": {"gcn_channels": 4}}, "list"),
        ({"finetune": {"fusion": 3}}, "string"),
        ({"model": {"heads": 5}}, "divisible"),
    ])
    def test_type_errors(self, doc, msg):
        with pytest.raises(ConfigError, match=msg):
            from_dict(doc)

    def test_optional_int(self):
        assert from_dict({"finetune": {"train_per_class": 5}}).finetune.train_per_class == 5
        assert from_dict({"finetune": {"train_per_class": None}}).finetune.train_per_class is None

    def test_round_trip_file(self, tmp_path):
        cfg = from_dict({"model": {"d": 32, "ffn": 64}, "synth": {"class_count": 4}})
        (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
        assert load_config(tmp_path / "c.json").to_dict() == cfg.to_dict()

    def test_with_seed(self):
        cfg = Config().with_seed(11)
        assert cfg.pretrain.seed == cfg.finetune.seed == cfg.synth.seed == 11

    def test_bad_file(self, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(tmp_path / "c.json")
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.json")
