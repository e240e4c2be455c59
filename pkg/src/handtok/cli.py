"""``handtok`` command line: synth, pretrain, finetune, eval, reconstruct.

Exit codes: 0 success, 1 invalid input or configuration, 2 failure while running.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import container
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import Config, ConfigError, from_dict, load_config
from .finetune import SignClassifier, evaluate_classifier, finetune_run, fuse_logits, init_from_checkpoint, low_data_split
from .handmodel import AssetError, HandModelAsset, load_asset, synth_asset
from .metrics import classification_report
from .model import ModelConfig, TokenBank
from .numerics import no_grad
from .numerics.autodiff import NonFiniteError
from .posedata import HandSequence, SchemaError, load_dataset, save_sequence, split_dataset, synth_generate
from .pretrain import PretrainModel, TrainingError, apply_masking, evaluate_model, heldout_batch, pretrain_run


class UsageError(Exception):
    """Bad input detected before any computation (exit code 1)."""


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else from_dict({})
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _asset(path: str | None) -> HandModelAsset:
    if path is None:
        return synth_asset(0)
    if not Path(path).exists():
        raise UsageError(f"hand-model asset not found: {path}")
    return load_asset(path)


def _dataset(path: str | None) -> list[HandSequence]:
    if path is None:
        raise UsageError("--data is required")
    if not Path(path).is_dir():
        raise UsageError(f"data directory not found: {path}")
    seqs = load_dataset(path)
    if not seqs:
        raise UsageError(f"no pose-JSON sequences in {path}")
    return seqs


def _checkpoint(path: str | None, required: bool = True) -> Checkpoint | None:
    if path is None:
        if required:
            raise UsageError("--checkpoint is required")
        return None
    if not Path(path).exists():
        raise UsageError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _model_config(ckpt: Checkpoint, args) -> ModelConfig:
    """Architecture from the checkpoint, cross-checked against ``--config`` when one is given."""
    if args.config:
        model_cfg = load_config(args.config).model
        ckpt.verify(model_cfg.to_dict())
        return model_cfg
    return from_dict({"model": ckpt.config["model"]}).model


# -- commands ---------------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out or "synth_data")
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} is not empty; pass --force to overwrite")
    seqs = synth_generate(cfg.synth, _asset(args.asset))
    out.mkdir(parents=True, exist_ok=True)
    for s in seqs:
        save_sequence(s, out / f"{s.source_id}.json")
    manifest = {"count": len(seqs), "classes": cfg.synth.class_count, "seed": cfg.synth.seed,
                "files": [f"{s.source_id}.json" for s in seqs]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(seqs)} sequences to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    seqs = _dataset(args.data)
    asset = _asset(args.asset)
    result = pretrain_run(seqs, cfg.pretrain, cfg.model, asset, log=print)
    result.checkpoint.extra["asset"] = args.asset
    out = args.out or "pretrain.sbc"
    save_checkpoint(result.checkpoint, out)
    print(f"saved checkpoint to {out}", file=sys.stderr)
    return 0


def _finetune_split(seqs, cfg: Config):
    ft = cfg.finetune
    if ft.train_per_class is not None:
        return low_data_split(seqs, ft.train_per_class, ft.seed)
    return split_dataset(seqs, ft.heldout_fraction, ft.seed)


def cmd_finetune(args) -> int:
    cfg = _config(args)
    seqs = _dataset(args.data)
    ckpt = _checkpoint(args.checkpoint, required=False)
    if ckpt is not None:
        ckpt.verify(cfg.model.to_dict())
    train, test = _finetune_split(seqs, cfg)
    n_classes = max(s.label for s in seqs) + 1
    result = finetune_run(train, test, cfg.finetune, cfg.model, ckpt, n_classes, log=print)
    out = args.out or "finetune.sbc"
    save_checkpoint(result.checkpoint, out)
    _emit(result.metrics, args.metrics)
    return 0


def _pretrain_model(ckpt: Checkpoint, args) -> PretrainModel:
    model_cfg = _model_config(ckpt, args)
    asset = _asset(args.asset if args.asset else ckpt.extra.get("asset"))
    model = PretrainModel(model_cfg, asset, np.random.default_rng(0))
    model.load_state_dict(ckpt.params)
    return model


def cmd_eval(args) -> int:
    ckpt = _checkpoint(args.checkpoint)
    seqs = _dataset(args.data)
    cfg = _config(args)
    if ckpt.kind == "pretrain":
        model = _pretrain_model(ckpt, args)
        bank = TokenBank(seqs, model.cfg.frames)
        report = evaluate_model(model, bank, cfg.pretrain)
    elif ckpt.kind == "finetune":
        model_cfg = _model_config(ckpt, args)
        model = SignClassifier(model_cfg, int(ckpt.extra["n_classes"]), np.random.default_rng(0))
        init_from_checkpoint(model, ckpt)
        report = evaluate_classifier(model, seqs)
        if args.fuse:
            other = np.asarray(json.loads(Path(args.fuse).read_text()), dtype=np.float64)
            bank = TokenBank(seqs, model_cfg.frames)
            scores = model.scores(bank.batch(range(len(bank)), "center")[0])
            report["fused"] = classification_report(fuse_logits(scores, other, cfg.finetune.fusion), bank.labels)
    else:
        raise UsageError(f"unknown checkpoint kind {ckpt.kind!r}")
    _emit(report, args.out)
    return 0


def cmd_reconstruct(args) -> int:
    ckpt = _checkpoint(args.checkpoint)
    if ckpt.kind != "pretrain":
        raise UsageError("reconstruct needs a pretraining checkpoint (it carries the hand-model decoder)")
    seqs = _dataset(args.data)
    cfg = _config(args)
    model = _pretrain_model(ckpt, args)
    bank = TokenBank(seqs, model.cfg.frames)
    joints, conf, plan = heldout_batch(bank, cfg.pretrain)
    masked = apply_masking(joints, plan)
    out = Path(args.out or "reconstructions")
    out.mkdir(parents=True, exist_ok=True)
    T = model.cfg.frames
    for i, seq in enumerate(seqs):
        with no_grad():
            _, j2, j3 = model(masked[i:i + 1])
        frames = []
        for tok in range(2 * T):
            frames.append({
                "t": tok % T, "hand": "left" if tok < T else "right",
                "strategy": int(plan.strategy[i, tok]),
                "target": joints[i, tok].tolist(), "masked": masked[i, tok].tolist(),
                "reconstruction": j2.data[0, tok].tolist(), "joints_3d": j3.data[0, tok].tolist(),
                "confidence": conf[i, tok].tolist(),
            })
        (out / f"{seq.source_id}.json").write_text(json.dumps({"source_id": seq.source_id, "frames": frames}))
    print(f"wrote {len(seqs)} reconstructions to {out}")
    return 0


COMMANDS = {"synth": cmd_synth, "pretrain": cmd_pretrain, "finetune": cmd_finetune,
            "eval": cmd_eval, "reconstruct": cmd_reconstruct}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="handtok", description="masked hand-pose token pretraining")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("synth", "generate a synthetic pose-JSON dataset"),
                            ("pretrain", "self-supervised pretraining"),
                            ("finetune", "train the sign classifier"),
                            ("eval", "reconstruction or classification metrics"),
                            ("reconstruct", "dump masked inputs and reconstructions")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--out", help="output path")
        p.add_argument("--checkpoint", help="checkpoint file")
        p.add_argument("--force", action="store_true", help="overwrite existing output")
        p.add_argument("--asset", help="hand-model asset file (default: built-in synthetic hand)")
        if name != "synth":
            p.add_argument("--data", help="directory of pose-JSON sequences")
        if name == "finetune":
            p.add_argument("--metrics", help="write the metrics report here instead of stdout")
        if name == "eval":
            p.add_argument("--fuse", help="JSON score matrix to fuse with the classifier logits")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, CheckpointError, SchemaError, AssetError,
            container.ContainerError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, NonFiniteError, ValueError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
