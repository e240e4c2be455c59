"""Isolated sign classification: attention pooling head, fine-tuning loop and late fusion."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import metrics
from .checkpoint import Checkpoint, CheckpointError, config_hash
from .model import Backbone, ModelConfig, TokenBank
from .numerics import ad, value_and_grad
from .numerics.autodiff import NonFiniteError, Tensor
from .numerics.nn import Linear, Module, cross_entropy
from .numerics.optim import OptimizerState, adam_step
from .posedata import HandSequence
from .pretrain import TrainingError


@dataclass
class FinetuneConfig:
    epochs: int = 40
    batch_size: int = 8
    lr: float = 1e-3
    lr_decay: float = 0.1
    lr_interval: int = 20
    weight_decay: float = 1e-4
    warmup_steps: int = 100
    train_per_class: int | None = None
    heldout_fraction: float = 0.2
    fusion: str = "logits"
    seed: int = 0

    def validate(self) -> None:
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be non-negative, got {self.warmup_steps}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.train_per_class is not None and self.train_per_class < 1:
            raise ValueError(f"train_per_class must be positive, got {self.train_per_class}")
        if not 0.0 < self.heldout_fraction < 1.0:
            raise ValueError(f"heldout_fraction must be in (0, 1), got {self.heldout_fraction}")
        if self.fusion not in ("logits", "probs"):
            raise ValueError(f"fusion must be 'logits' or 'probs', got {self.fusion!r}")


def attention_pool(features: Tensor, scorer: Linear, return_weights: bool = False):
    """``alpha = softmax(scorer(F))`` over tokens; returns ``sum_t alpha_t F_t``."""
    scores = scorer(features)                       # (..., n, 1)
    alpha = ad.softmax(scores, axis=-2)
    pooled = (alpha * features).sum(axis=-2)
    return (pooled, alpha[..., 0]) if return_weights else pooled


class PredictionHead(Module):
    def __init__(self, d: int, n_classes: int, rng: np.random.Generator, dtype=np.float32):
        if n_classes < 2:
            raise ValueError(f"need at least two classes, got {n_classes}")
        self.n_classes = n_classes
        self.scorer = Linear(d, 1, rng, dtype)
        self.classifier = Linear(d, n_classes, rng, dtype)

    def __call__(self, features: Tensor) -> Tensor:
        return self.classifier(attention_pool(features, self.scorer))


class SignClassifier:
    def __init__(self, cfg: ModelConfig, n_classes: int, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.backbone = Backbone(cfg, rng, dtype)
        self.head = PredictionHead(cfg.d, n_classes, rng, dtype)

    @property
    def n_classes(self) -> int:
        return self.head.n_classes

    def parameters(self) -> dict[str, Tensor]:
        out = {f"backbone.{k}": v for k, v in self.backbone.named_parameters()}
        out.update({f"head.{k}": v for k, v in self.head.named_parameters()})
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def __call__(self, joints, rng: np.random.Generator | None = None) -> Tensor:
        with ad.scope("backbone"):
            features = self.backbone(joints, rng)
        with ad.scope("head"):
            return self.head(features)

    def scores(self, joints: np.ndarray, batch_size: int = 32) -> np.ndarray:
        with ad.no_grad():
            parts = [self(joints[i:i + batch_size]).data for i in range(0, len(joints), batch_size)]
        return np.concatenate(parts)


def init_from_checkpoint(model: SignClassifier, ckpt: Checkpoint) -> None:
    """Load backbone weights (and the head when it was saved by a fine-tuning run)."""
    ckpt.verify(model.cfg.to_dict())
    model.backbone.load_state_dict(ckpt.subset("backbone."))
    head = ckpt.subset("head.")
    if head:
        saved = head["classifier.bias"].shape[0]
        if saved != model.n_classes:
            raise CheckpointError(f"checkpoint head has {saved} classes, dataset has {model.n_classes}")
        model.head.load_state_dict(head)


def classify(model: SignClassifier, joints: np.ndarray) -> np.ndarray:
    """Logits ``(N, K)`` for token arrays ``(N, 2T, 21, 2)``."""
    return model.scores(joints)


def fuse_logits(a, b, mode: str = "logits") -> np.ndarray:
    """Late fusion of two score arrays: sum of logits, or sum of softmax probabilities."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"score shapes differ: {a.shape} vs {b.shape}")
    if mode == "logits":
        return a + b
    if mode == "probs":
        def prob(x):
            e = np.exp(x - x.max(-1, keepdims=True))
            return e / e.sum(-1, keepdims=True)
        return prob(a) + prob(b)
    raise ValueError(f"unknown fusion mode {mode!r}")


def low_data_split(sequences: list[HandSequence], per_class: int, seed: int):
    """Pick ``per_class`` training sequences of every label; everything else is held out."""
    rng = np.random.default_rng([seed, 31337])
    by_label: dict[int, list[int]] = {}
    for i, s in enumerate(sequences):
        by_label.setdefault(s.label, []).append(i)
    train = []
    for label in sorted(by_label):
        idx = np.array(by_label[label])
        if len(idx) < per_class:
            raise ValueError(f"class {label} has {len(idx)} sequences, fewer than {per_class}")
        train += rng.choice(idx, per_class, replace=False).tolist()
    chosen = set(train)
    return ([sequences[i] for i in sorted(train)],
            [s for i, s in enumerate(sequences) if i not in chosen])


@dataclass
class FinetuneResult:
    model: SignClassifier
    checkpoint: Checkpoint
    metrics: dict
    history: list[dict] = field(default_factory=list)
    final_loss: float = float("nan")


def finetune_run(train: list[HandSequence], test: list[HandSequence], cfg: FinetuneConfig,
                 model_cfg: ModelConfig | None = None, checkpoint: Checkpoint | None = None,
                 n_classes: int | None = None, log: Callable[[str], None] | None = None,
                 dtype=np.float32) -> FinetuneResult:
    """Supervised training on ``train``; metrics are reported on ``test``."""
    cfg.validate()
    model_cfg = model_cfg or ModelConfig()
    model_cfg.validate()
    if not train or not test:
        raise ValueError("fine-tuning needs non-empty training and test sets")
    labels = [s.label for s in train + test]
    if any(lab is None for lab in labels):
        raise ValueError("fine-tuning needs labelled sequences")
    K = n_classes if n_classes is not None else max(labels) + 1
    if max(labels) >= K:
        raise ValueError(f"label {max(labels)} out of range for {K} classes")
    rng = np.random.default_rng(cfg.seed)
    model = SignClassifier(model_cfg, K, rng, dtype)
    if checkpoint is not None:
        init_from_checkpoint(model, checkpoint)
    params = model.parameters()
    opt = OptimizerState(base_lr=cfg.lr, decay=cfg.lr_decay, decay_interval=cfg.lr_interval,
                         weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps, lr=cfg.lr)
    bank = TokenBank(train, model_cfg.frames)
    history = []
    final = float("nan")
    for epoch in range(cfg.epochs):
        lr = opt.set_epoch(epoch)
        order = rng.permutation(len(bank))
        total, n_batches = 0.0, 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            joints, _ = bank.batch(idx, "random", rng)
            y = bank.labels[idx]
            try:
                value, grads = value_and_grad(lambda: cross_entropy(model(joints, rng), y), params)
            except NonFiniteError as exc:
                raise TrainingError(f"epoch {epoch} batch {b} (sequences {idx.tolist()}): {exc}") from exc
            adam_step(opt, params, grads)
            total += value
            n_batches += 1
            final = value
        entry = {"epoch": epoch, "loss": total / n_batches, "lr": lr}
        history.append(entry)
        if log:
            log(json.dumps(entry))
    report = evaluate_classifier(model, test)
    ckpt = Checkpoint(
        kind="finetune",
        config={"model": model_cfg.to_dict(), "finetune": asdict(cfg)},
        config_hash=config_hash(model_cfg.to_dict()),
        params=model.state_dict(),
        optimizer=opt,
        epoch=cfg.epochs,
        rng_state=rng.bit_generator.state,
        extra={"n_classes": K},
    )
    return FinetuneResult(model, ckpt, report, history, final)


def evaluate_classifier(model: SignClassifier, sequences: list[HandSequence]) -> dict:
    bank = TokenBank(sequences, model.cfg.frames)
    joints, _ = bank.batch(range(len(bank)), "center")
    scores = model.scores(joints)
    return metrics.classification_report(scores, bank.labels)
