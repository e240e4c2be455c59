import json

import numpy as np
import pytest

from handtok.checkpoint import CheckpointError
from handtok.finetune import (
    FinetuneConfig, PredictionHead, SignClassifier, attention_pool, evaluate_classifier, finetune_run,
    fuse_logits, init_from_checkpoint, low_data_split,
)
from handtok.numerics import Linear, Tensor
from handtok.pretrain import PretrainConfig, pretrain_run


class TestAttentionPool:
    def test_single_token(self, rng):
        f = rng.normal(size=(1, 6))
        out = attention_pool(Tensor(f), Linear(6, 1, rng, np.float64))
        np.testing.assert_allclose(out.data, f[0], atol=1e-15)

    def test_zero_scorer_is_mean(self, rng):
        scorer = Linear(6, 1, rng, np.float64)
        scorer.weight.data[:] = 0
        f = rng.normal(size=(2, 8, 6))
        out, alpha = attention_pool(Tensor(f), scorer, return_weights=True)
        np.testing.assert_allclose(alpha.data, 1 / 8)
        np.testing.assert_allclose(out.data, f.mean(1), atol=1e-14)

    def test_saturated_weight_picks_token(self, rng):
        scorer = Linear(3, 1, rng, np.float64)
        scorer.weight.data[:] = 0
        scorer.weight.data[0, 0] = 1.0
        scorer.bias.data[:] = 0
        f = rng.normal(size=(5, 3)) * 0.1
        f[2, 0] = 20.0
        out = attention_pool(Tensor(f), scorer).data
        np.testing.assert_allclose(out, f[2], atol=1e-6)

    def test_head_needs_two_classes(self, rng):
        with pytest.raises(ValueError):
            PredictionHead(4, 1, rng)


class TestFusion:
    def test_zero_b_is_identity(self, rng):
        a = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(fuse_logits(a, np.zeros_like(a)), a)

    def test_hand_built_disagreement(self):
        a = np.array([[2.0, 1.0, 0.0]])
        b = np.array([[0.0, 0.5, 2.5]])
        # logit sums: 2.0, 1.5, 2.5 -> class 2
        assert fuse_logits(a, b).argmax() == 2
        # probability sums: 0.665+0.067, 0.245+0.111, 0.090+0.821
        p = fuse_logits(a, b, "probs")[0]
        np.testing.assert_allclose(p, [0.7329, 0.3560, 0.9112], atol=5e-4)
        assert p.argmax() == 2

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shapes"):
            fuse_logits(np.zeros((2, 3)), np.zeros((2, 4)))

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="fusion"):
            fuse_logits(np.zeros((1, 2)), np.zeros((1, 2)), "max")


class TestSplit:
    def test_per_class_counts(self, tiny_sequences):
        train, test = low_data_split(tiny_sequences, 2, 0)
        assert sorted(s.label for s in train) == [0, 0, 1, 1, 2, 2]
        assert len(test) == 6
        assert not {s.source_id for s in train} & {s.source_id for s in test}

    def test_too_few(self, tiny_sequences):
        with pytest.raises(ValueError, match="fewer than"):
            low_data_split(tiny_sequences, 5, 0)


class TestRun:
    def test_metrics_report(self, tiny_sequences, tiny_model_cfg):
        train, test = low_data_split(tiny_sequences, 2, 0)
        lines = []
        result = finetune_run(train, test, FinetuneConfig(epochs=2, batch_size=3), tiny_model_cfg, n_classes=3,
                              log=lines.append)
        assert set(result.metrics) == {"top1_pi", "top5_pi", "top1_pc", "top5_pc", "per_class_counts"}
        assert result.metrics["per_class_counts"] == [2, 2, 2]
        assert result.metrics["top5_pi"] == 1.0  # k is capped at K = 3
        assert [json.loads(x)["epoch"] for x in lines] == [0, 1]
        assert result.checkpoint.extra["n_classes"] == 3

    def test_pretrained_backbone_loaded(self, asset, tiny_sequences, tiny_model_cfg):
        pre = pretrain_run(tiny_sequences, PretrainConfig(epochs=1, batch_size=6), tiny_model_cfg, asset)
        clf = SignClassifier(tiny_model_cfg, 3, np.random.default_rng(0))
        init_from_checkpoint(clf, pre.checkpoint)
        for k, v in clf.backbone.named_parameters():
            np.testing.assert_array_equal(v.data, pre.checkpoint.params[f"backbone.{k}"])

    def test_architecture_mismatch(self, asset, tiny_sequences, tiny_model_cfg):
        pre = pretrain_run(tiny_sequences, PretrainConfig(epochs=0), tiny_model_cfg, asset)
        tiny_model_cfg.ffn = 64
        clf = SignClassifier(tiny_model_cfg, 3, np.random.default_rng(0))
        with pytest.raises(CheckpointError, match="config hash"):
            init_from_checkpoint(clf, pre.checkpoint)

    def test_class_count_mismatch(self, tiny_sequences, tiny_model_cfg):
        train, test = low_data_split(tiny_sequences, 2, 0)
        done = finetune_run(train, test, FinetuneConfig(epochs=1), tiny_model_cfg, n_classes=3)
        clf = SignClassifier(tiny_model_cfg, 4, np.random.default_rng(0))
        with pytest.raises(CheckpointError, match="3 classes"):
            init_from_checkpoint(clf, done.checkpoint)

    def test_head_restored(self, tiny_sequences, tiny_model_cfg):
        train, test = low_data_split(tiny_sequences, 2, 0)
        done = finetune_run(train, test, FinetuneConfig(epochs=1), tiny_model_cfg, n_classes=3)
        clf = SignClassifier(tiny_model_cfg, 3, np.random.default_rng(5))
        init_from_checkpoint(clf, done.checkpoint)
        assert evaluate_classifier(clf, test) == done.metrics

    def test_unlabelled_rejected(self, tiny_sequences, tiny_model_cfg):
        import dataclasses

        unlabelled = [dataclasses.replace(s, label=None) for s in tiny_sequences[:2]]
        with pytest.raises(ValueError, match="labelled"):
            finetune_run(unlabelled, unlabelled, FinetuneConfig(epochs=1), tiny_model_cfg)

    @pytest.mark.parametrize("kwargs", [dict(fusion="max"), dict(train_per_class=0), dict(heldout_fraction=0.0)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            FinetuneConfig(**kwargs).validate()
