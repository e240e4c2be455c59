"""Backbone (token embedding + transformer encoder) shared by pretraining and fine-tuning."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .embedding import TokenEmbedder
from .encoder import Encoder, EncoderConfig
from .numerics.autodiff import Tensor
from .numerics.nn import Module
from .posedata import CropTokens, HandSequence, crop_sequence, sample_frames


@dataclass
class ModelConfig:
    d: int = 256
    gcn_channels: list[int] = field(default_factory=lambda: [64, 128])
    layers: int = 3
    heads: int = 4
    ffn: int = 1024
    dropout: float = 0.1
    frames: int = 32
    decoder_gain: float = 0.1

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.layers, self.heads, self.d, self.ffn, self.dropout)

    def validate(self) -> None:
        self.encoder_config().validate()
        if self.frames < 1:
            raise ValueError(f"frames must be positive, got {self.frames}")
        if not self.gcn_channels or min(self.gcn_channels) < 1:
            raise ValueError(f"gcn_channels must be positive widths, got {self.gcn_channels}")

    def to_dict(self) -> dict:
        return asdict(self)


class Backbone(Module):
    """Crop-space joints ``(B, 2T, 21, 2)`` -> encoded features ``(B, 2T, d)``."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        cfg.validate()
        self.embed = TokenEmbedder(cfg.d, rng, dtype, tuple(cfg.gcn_channels))
        self.encoder = Encoder(cfg.encoder_config(), rng, dtype)

    def __call__(self, crop_joints, rng: np.random.Generator | None = None) -> Tensor:
        return self.encoder(self.embed(crop_joints), rng)


def sequence_tokens(crop: CropTokens, frame_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gather sampled frames into token order [left t0..t_{T-1}, right t0..t_{T-1}].

    Returns joints ``(2T, 21, 2)`` and confidences ``(2T, 21)``.
    """
    j = crop.joints[frame_idx].transpose(1, 0, 2, 3)
    c = crop.confidence[frame_idx].transpose(1, 0, 2)
    T = len(frame_idx)
    return j.reshape(2 * T, *j.shape[2:]), c.reshape(2 * T, c.shape[-1])


class TokenBank:
    """Cropped sequences cached once; draws fixed-length token batches."""

    def __init__(self, sequences: list[HandSequence], T: int):
        self.sequences = sequences
        self.crops = [crop_sequence(s) for s in sequences]
        self.T = T
        self.labels = np.array([-1 if s.label is None else s.label for s in sequences], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.sequences)

    def batch(self, indices, mode: str = "center", rng: np.random.Generator | None = None):
        joints, conf = [], []
        for i in indices:
            idx = sample_frames(len(self.sequences[i]), self.T, mode, rng)
            j, c = sequence_tokens(self.crops[i], idx)
            joints.append(j)
            conf.append(c)
        return np.stack(joints), np.stack(conf)
