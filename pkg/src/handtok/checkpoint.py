"""Versioned checkpoint files: parameters, optimizer moments, epoch and RNG state."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .numerics.optim import OptimizerState

CHECKPOINT_MAGIC = b"SBC1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def config_hash(section: dict) -> str:
    """sha256 of the canonical JSON form of a config section."""
    text = json.dumps(section, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(eq=False)
class Checkpoint:
    kind: str                                  # "pretrain" or "finetune"
    config: dict
    config_hash: str
    params: dict[str, np.ndarray]
    optimizer: OptimizerState | None = None
    epoch: int = 0
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)

    def verify(self, model_section: dict) -> None:
        """Raise if the checkpoint was produced under a different model architecture."""
        expected = config_hash(model_section)
        if expected != self.config_hash:
            raise CheckpointError(
                f"checkpoint config hash {self.config_hash} does not match model config hash {expected}")

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    arrays = {f"param/{k}": ckpt.params[k] for k in sorted(ckpt.params)}
    opt_meta = None
    if ckpt.optimizer is not None:
        opt_meta = ckpt.optimizer.hyper()
        for k in sorted(ckpt.optimizer.m):
            arrays[f"adam.m/{k}"] = ckpt.optimizer.m[k]
            arrays[f"adam.v/{k}"] = ckpt.optimizer.v[k]
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "config": ckpt.config,
        "config_hash": ckpt.config_hash,
        "optimizer": opt_meta,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "extra": ckpt.extra,
    }
    return container.encode(CHECKPOINT_MAGIC, meta, arrays)


def decode_checkpoint(payload: bytes) -> Checkpoint:
    try:
        meta, arrays = container.decode(CHECKPOINT_MAGIC, payload)
    except container.ContainerError as exc:
        raise CheckpointError(f"not a checkpoint: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})")
    params = {k[6:]: v for k, v in arrays.items() if k.startswith("param/")}
    opt = None
    if meta["optimizer"] is not None:
        opt = OptimizerState(**meta["optimizer"])
        opt.m = {k[7:]: v for k, v in arrays.items() if k.startswith("adam.m/")}
        opt.v = {k[7:]: v for k, v in arrays.items() if k.startswith("adam.v/")}
    return Checkpoint(meta["kind"], meta["config"], meta["config_hash"], params, opt,
                      meta["epoch"], meta["rng_state"], meta.get("extra", {}))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
