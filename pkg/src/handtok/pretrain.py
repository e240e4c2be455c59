"""Masked hand-pose token pretraining: token selection, the three corruption
strategies, the reconstruction / regularization objective and the training loop.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import metrics
from .checkpoint import Checkpoint, config_hash
from .handmodel import HandDecoder, HandModelAsset, synth_asset
from .model import Backbone, ModelConfig, TokenBank
from .numerics import ad, value_and_grad
from .numerics.autodiff import NonFiniteError, Tensor
from .numerics.optim import OptimizerState, adam_step
from .posedata import CROP, N_JOINTS, HandSequence, split_dataset

UNCHOSEN, JOINT, FRAME, IDENTITY = -1, 0, 1, 2
STRATEGY_NAMES = {JOINT: "joint", FRAME: "frame", IDENTITY: "identity"}
ZERO, DISTURB = 0, 1
MASK_VALUE = CROP / 2  # zero in [-1, 1] coordinates is the crop centre


class TrainingError(RuntimeError):
    pass


@dataclass
class PretrainConfig:
    max_masked_joints: int = 5
    choose_rate: float = 0.5
    conf_threshold: float = 0.5
    reg_weight: float = 0.01
    beta_weight: float = 10.0
    beta_smooth_weight: float = 100.0
    disturb_sigma: float = 12.8
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    lr_decay: float = 0.1
    lr_interval: int = 20
    weight_decay: float = 1e-4
    warmup_steps: int = 100
    heldout_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.choose_rate <= 1.0:
            raise ValueError(f"choose_rate must be in (0, 1], got {self.choose_rate}")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ValueError(f"conf_threshold must be in [0, 1], got {self.conf_threshold}")
        if not 1 <= self.max_masked_joints <= N_JOINTS:
            raise ValueError(f"max_masked_joints must be in [1, {N_JOINTS}], got {self.max_masked_joints}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be non-negative, got {self.warmup_steps}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if min(self.reg_weight, self.beta_weight, self.beta_smooth_weight, self.disturb_sigma) < 0:
            raise ValueError("loss weights and disturb_sigma must be non-negative")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ValueError(f"heldout_fraction must be in [0, 1), got {self.heldout_fraction}")


# -- masking --------------------------------------------------------------------------

@dataclass
class MaskPlan:
    """Per-token corruption decisions for a token array of shape ``shape``."""

    chosen: np.ndarray       # (..., ) bool
    strategy: np.ndarray     # (..., ) int8: UNCHOSEN / JOINT / FRAME / IDENTITY
    joint_mask: np.ndarray   # (..., 21) bool, only for JOINT tokens
    mode: np.ndarray         # (..., ) int8: ZERO / DISTURB, meaningful for JOINT tokens
    noise: np.ndarray        # (..., 21, 2) pixel offsets applied where mode is DISTURB

    @property
    def shape(self) -> tuple[int, ...]:
        return self.chosen.shape

    @property
    def masked_counts(self) -> np.ndarray:
        return self.joint_mask.sum(-1)


def plan_masking(shape, cfg: PretrainConfig, rng: np.random.Generator) -> MaskPlan:
    """Draw a plan for tokens of the given leading shape (e.g. ``(B, 2T)``)."""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    n = int(np.prod(shape))
    chosen = rng.random(n) < cfg.choose_rate
    strategy = rng.integers(0, 3, n).astype(np.int8)
    strategy[~chosen] = UNCHOSEN
    m = rng.integers(1, cfg.max_masked_joints + 1, n)
    rank = np.argsort(rng.random((n, N_JOINTS)), axis=1).argsort(axis=1)
    joint_mask = (rank < m[:, None]) & (strategy == JOINT)[:, None]
    mode = (rng.random(n) < 0.5).astype(np.int8)
    noise = rng.normal(0.0, cfg.disturb_sigma, (n, N_JOINTS, 2))
    return MaskPlan(
        chosen.reshape(shape), strategy.reshape(shape), joint_mask.reshape(shape + (N_JOINTS,)),
        mode.reshape(shape), noise.reshape(shape + (N_JOINTS, 2)),
    )


def apply_masking(joints: np.ndarray, plan: MaskPlan) -> np.ndarray:
    """Corrupted copy of crop-space ``joints`` ``(..., 21, 2)``; the input is left intact."""
    joints = np.asarray(joints)
    if joints.shape[:-2] != plan.shape:
        raise ValueError(f"plan shape {plan.shape} does not match tokens {joints.shape[:-2]}")
    out = joints.copy()
    zero_sel = plan.joint_mask & (plan.mode == ZERO)[..., None]
    disturb_sel = plan.joint_mask & (plan.mode == DISTURB)[..., None]
    out[zero_sel] = MASK_VALUE
    out[disturb_sel] = joints[disturb_sel] + plan.noise[disturb_sel].astype(joints.dtype)
    out[plan.strategy == FRAME] = MASK_VALUE
    return out


# -- losses --------------------------------------------------------------------------------

def loss_rec(pred, target, confidence, chosen, eps: float = 0.5) -> Tensor:
    """Confidence-weighted L1 over chosen tokens and joints whose confidence reaches ``eps``."""
    pred = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    target = np.asarray(target, dtype=pred.dtype)
    confidence = np.asarray(confidence, dtype=np.float64)
    weight = np.where(confidence >= eps, confidence, 0.0) * np.asarray(chosen, bool)[..., None]
    resid = ad.tabs(pred - target).sum(axis=-1)
    return (resid * weight.astype(pred.dtype)).sum()


def loss_reg(theta, beta, beta_weight: float = 10.0, smooth_weight: float = 100.0, hands: int = 1) -> Tensor:
    """``sum_t |theta_t|^2 + w_b |beta_t|^2 + w_d |beta_t - beta_{t-1}|^2`` summed over hands.

    ``theta``/``beta`` are ``(..., hands * T, n)`` with each hand's frames
    contiguous; the temporal difference never crosses from one hand to the next.
    """
    theta = theta if isinstance(theta, Tensor) else Tensor(np.asarray(theta, dtype=np.float64))
    beta = beta if isinstance(beta, Tensor) else Tensor(np.asarray(beta, dtype=theta.dtype))
    n_tok = beta.shape[-2]
    if n_tok % hands:
        raise ValueError(f"{n_tok} tokens cannot be split across {hands} hands")
    mag = ad.square(theta).sum() + ad.square(beta).sum() * beta_weight
    per_hand = beta.reshape(beta.shape[:-2] + (hands, n_tok // hands, beta.shape[-1]))
    diff = per_hand[..., 1:, :] - per_hand[..., :-1, :]
    return mag + ad.square(diff).sum() * smooth_weight


def total_loss(rec, reg, lam: float = 0.01):
    return rec + reg * lam


# -- model --------------------------------------------------------------------------------

class PretrainModel:
    """Backbone plus hand-model-aware decoder."""

    def __init__(self, cfg: ModelConfig, asset: HandModelAsset, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.asset = asset
        self.backbone = Backbone(cfg, rng, dtype)
        self.decoder = HandDecoder(cfg.d, asset, rng, dtype, gain=cfg.decoder_gain)

    def parameters(self) -> dict[str, Tensor]:
        out = {f"backbone.{k}": v for k, v in self.backbone.named_parameters()}
        out.update({f"decoder.{k}": v for k, v in self.decoder.named_parameters()})
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.backbone.load_state_dict(_strip(state, "backbone."))
        self.decoder.load_state_dict(_strip(state, "decoder."))

    def __call__(self, masked_joints, rng: np.random.Generator | None = None):
        with ad.scope("backbone"):
            features = self.backbone(masked_joints, rng)
        T = features.shape[-2] // 2
        left = np.arange(2 * T) < T
        with ad.scope("decoder"):
            return self.decoder(features, mirror=left)

    def reconstruct(self, masked_joints: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            _, j2, _ = self(masked_joints)
        return j2.data


def _strip(state: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}


def objective(model: PretrainModel, joints, conf, plan: MaskPlan, cfg: PretrainConfig,
              rng: np.random.Generator | None = None):
    """Batch-mean pretraining objective; returns (total, rec, reg) tensors."""
    masked = apply_masking(joints, plan)
    latent, j2, _ = model(masked, rng)
    with ad.scope("loss"):
        rec = loss_rec(j2, joints, conf, plan.chosen, cfg.conf_threshold)
        reg = loss_reg(latent.theta, latent.beta, cfg.beta_weight, cfg.beta_smooth_weight, hands=2)
        scale = 1.0 / joints.shape[0]
        return total_loss(rec, reg, cfg.reg_weight) * scale, rec * scale, reg * scale


# -- evaluation ------------------------------------------------------------------------------

def reconstruction_eval(reconstruct: Callable[[np.ndarray], np.ndarray], joints: np.ndarray,
                        conf: np.ndarray, plan: MaskPlan, eps: float = 0.5, tau: float = 20.0) -> dict:
    """Masked-input vs reconstructed-output PCK/AUC on corrupted tokens.

    Scored tokens are those the plan actually corrupts (joint or frame
    strategy); scored joints are those with confidence of at least ``eps``.
    The target is the uncorrupted observed sequence.
    """
    masked = apply_masking(joints, plan)
    out = np.asarray(reconstruct(masked))
    scored = (plan.strategy == JOINT) | (plan.strategy == FRAME)
    valid = (conf >= eps) & scored[..., None]
    return {
        "input_pck": metrics.pck(masked, joints, tau, valid),
        "output_pck": metrics.pck(out, joints, tau, valid),
        "input_auc": metrics.auc(masked, joints, valid=valid),
        "output_auc": metrics.auc(out, joints, valid=valid),
        "n_joints": int(valid.sum()),
    }


def heldout_batch(bank: TokenBank, cfg: PretrainConfig):
    """Fixed evaluation tokens and mask plan (independent of the training stream)."""
    rng = np.random.default_rng([cfg.seed, 7919])
    joints, conf = bank.batch(range(len(bank)), "center")
    return joints, conf, plan_masking(joints.shape[:2], cfg, rng)


def evaluate_model(model: PretrainModel, bank: TokenBank, cfg: PretrainConfig, batch_size: int = 32) -> dict:
    joints, conf, plan = heldout_batch(bank, cfg)

    def reconstruct(masked):
        parts = [model.reconstruct(masked[i:i + batch_size]) for i in range(0, len(masked), batch_size)]
        return np.concatenate(parts)

    return reconstruction_eval(reconstruct, joints, conf, plan, cfg.conf_threshold)


# -- training loop ---------------------------------------------------------------------------

@dataclass
class PretrainResult:
    model: PretrainModel
    checkpoint: Checkpoint
    history: list[dict] = field(default_factory=list)
    final_loss: float = float("nan")


def pretrain_run(sequences: list[HandSequence], cfg: PretrainConfig, model_cfg: ModelConfig | None = None,
                 asset: HandModelAsset | None = None, log: Callable[[str], None] | None = None,
                 dtype=np.float32) -> PretrainResult:
    """Train the backbone and decoder on unlabeled sequences; returns the model and a checkpoint."""
    cfg.validate()
    model_cfg = model_cfg or ModelConfig()
    model_cfg.validate()
    asset = asset if asset is not None else synth_asset(0)
    if not sequences:
        raise ValueError("pretraining needs at least one sequence")
    rng = np.random.default_rng(cfg.seed)
    if cfg.heldout_fraction > 0 and len(sequences) > 1:
        train, held = split_dataset(sequences, cfg.heldout_fraction, cfg.seed)
    else:
        train, held = list(sequences), []
    if not train:
        raise ValueError("held-out split left no training sequences")
    model = PretrainModel(model_cfg, asset, rng, dtype)
    params = model.parameters()
    opt = OptimizerState(base_lr=cfg.lr, decay=cfg.lr_decay, decay_interval=cfg.lr_interval,
                         weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps, lr=cfg.lr)
    train_bank = TokenBank(train, model_cfg.frames)
    held_bank = TokenBank(held, model_cfg.frames) if held else None
    history: list[dict] = []
    final = float("nan")
    for epoch in range(cfg.epochs):
        lr = opt.set_epoch(epoch)
        order = rng.permutation(len(train_bank))
        sums = np.zeros(3)
        n_batches = 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            joints, conf = train_bank.batch(idx, "random", rng)
            plan = plan_masking(joints.shape[:2], cfg, rng)
            parts = {}

            def compute():
                total, rec, reg = objective(model, joints, conf, plan, cfg, rng)
                parts["rec"], parts["reg"] = rec.item(), reg.item()
                return total

            try:
                value, grads = value_and_grad(compute, params)
            except NonFiniteError as exc:
                raise TrainingError(f"epoch {epoch} batch {b} (sequences {idx.tolist()}): {exc}") from exc
            if not np.isfinite(value):
                raise TrainingError(f"epoch {epoch} batch {b} (sequences {idx.tolist()}): loss is {value}")
            adam_step(opt, params, grads)
            sums += (parts["rec"], parts["reg"], value)
            n_batches += 1
            final = value
        entry = {
            "epoch": epoch,
            "loss_rec": float(sums[0] / n_batches),
            "loss_reg": float(sums[1] / n_batches),
            "loss_total": float(sums[2] / n_batches),
            "heldout_pck20": evaluate_model(model, held_bank, cfg)["output_pck"] if held_bank else None,
            "lr": lr,
        }
        history.append(entry)
        if log:
            log(json.dumps(entry))
    ckpt = Checkpoint(
        kind="pretrain",
        config={"model": model_cfg.to_dict(), "pretrain": asdict(cfg)},
        config_hash=config_hash(model_cfg.to_dict()),
        params=model.state_dict(),
        optimizer=opt,
        epoch=cfg.epochs,
        rng_state=rng.bit_generator.state,
    )
    return PretrainResult(model, ckpt, history, final)

