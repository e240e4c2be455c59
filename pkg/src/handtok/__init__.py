"""Masked hand-pose token pretraining with a differentiable hand-model decoder,
and sign classification on top of the pretrained encoder."""

from .finetune import FinetuneConfig, finetune_run, low_data_split
from .kernels import BACKEND
from .model import ModelConfig
from .posedata import HandSequence, SynthConfig, load_dataset, synth_generate
from .pretrain import PretrainConfig, pretrain_run

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "FinetuneConfig", "HandSequence", "ModelConfig", "PretrainConfig", "SynthConfig",
    "finetune_run", "load_dataset", "low_data_split", "pretrain_run", "synth_generate",
]
