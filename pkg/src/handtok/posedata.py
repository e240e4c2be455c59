"""Two-hand 2D pose sequences: data model, pose-JSON I/O, crop normalization,
temporal sampling, and a deterministic synthetic signer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable

import numpy as np

N_JOINTS = 21
CROP = 256.0
CROP_MARGIN = 2.2

# wrist, then thumb, index, middle, ring, pinky; each finger base -> tip
JOINT_NAMES = ["wrist"] + [f"{f}{i}" for f in ("thumb", "index", "middle", "ring", "pinky") for i in range(1, 5)]
FINGER_SLICES = [slice(1 + 4 * f, 5 + 4 * f) for f in range(5)]


class Chirality(IntEnum):
    LEFT = 0
    RIGHT = 1


class SchemaError(ValueError):
    """A pose-JSON document does not follow the schema."""


@dataclass
class HandPoseFrame:
    joints: np.ndarray        # (21, 2) pixels
    confidence: np.ndarray    # (21,)
    chirality: Chirality
    time_index: int

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.joints.shape != (N_JOINTS, 2):
            raise SchemaError(f"expected {N_JOINTS} joints, got array of shape {self.joints.shape}")
        if self.confidence.shape != (N_JOINTS,):
            raise SchemaError(f"expected {N_JOINTS} confidences, got {self.confidence.shape}")
        if not np.isfinite(self.joints).all():
            raise SchemaError("joint coordinates must be finite")
        if ((self.confidence < 0) | (self.confidence > 1)).any():
            raise SchemaError("confidence outside [0, 1]")
        if self.time_index < 0:
            raise SchemaError("time index must be non-negative")


@dataclass
class HandSequence:
    """Both hands over time, stored as arrays.

    ``joints`` is ``(L, 2, 21, 2)`` indexed by (frame, chirality, joint, xy);
    a hand that was not detected has zero joints, zero confidence and
    ``present[t, h] = False``.
    """

    times: np.ndarray         # (L,) non-decreasing
    joints: np.ndarray        # (L, 2, 21, 2)
    confidence: np.ndarray    # (L, 2, 21)
    present: np.ndarray       # (L, 2) bool
    label: int | None = None
    source_id: str = ""
    fps: float = 25.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        self.present = np.asarray(self.present, dtype=bool)
        self.check()

    def __len__(self) -> int:
        return len(self.times)

    def check(self) -> None:
        L = len(self.times)
        if self.joints.shape != (L, 2, N_JOINTS, 2) or self.confidence.shape != (L, 2, N_JOINTS) \
                or self.present.shape != (L, 2):
            raise SchemaError("inconsistent sequence array shapes")
        if L and (np.diff(self.times) < 0).any():
            raise SchemaError("time indices must be non-decreasing")
        if len(np.unique(self.times)) != L:
            raise SchemaError("at most one frame per hand per time index")
        if ((self.confidence < 0) | (self.confidence > 1)).any():
            raise SchemaError("confidence outside [0, 1]")
        if not np.isfinite(self.joints).all():
            raise SchemaError("joint coordinates must be finite")
        absent = ~self.present
        if (self.joints[absent] != 0).any() or (self.confidence[absent] != 0).any():
            raise SchemaError("absent hands must have zero joints and zero confidence")

    @property
    def frames(self) -> list[HandPoseFrame]:
        out = []
        for i, t in enumerate(self.times):
            for h in Chirality:
                out.append(HandPoseFrame(self.joints[i, h], self.confidence[i, h], h, int(t)))
        return out


# -- pose-JSON -------------------------------------------------------------------

def _parse_hand(value, where: str):
    if value is None:
        return None
    arr = np.asarray(value, dtype=np.float64) if isinstance(value, list) else None
    if arr is None or arr.ndim != 2:
        raise SchemaError(f"{where}: hand must be a list of [x, y, c] triples or null")
    if arr.shape[0] != N_JOINTS:
        raise SchemaError(f"{where}: expected 21 joints, got {arr.shape[0]}")
    if arr.shape[1] != 3:
        raise SchemaError(f"{where}: each joint needs [x, y, c]")
    if not np.isfinite(arr).all():
        raise SchemaError(f"{where}: non-finite value")
    if ((arr[:, 2] < 0) | (arr[:, 2] > 1)).any():
        raise SchemaError(f"{where}: confidence outside [0, 1]")
    return arr


def parse_sequence(doc: dict) -> HandSequence:
    """Build a :class:`HandSequence` from one pose-JSON document."""
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    for key in ("source_id", "fps", "label", "frames"):
        if key not in doc:
            raise SchemaError(f"missing key '{key}'")
    label = doc["label"]
    if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
        raise SchemaError("label must be an integer or null")
    frames = doc["frames"]
    if not isinstance(frames, list):
        raise SchemaError("'frames' must be a list")
    L = len(frames)
    times = np.zeros(L, dtype=np.int64)
    joints = np.zeros((L, 2, N_JOINTS, 2))
    conf = np.zeros((L, 2, N_JOINTS))
    present = np.zeros((L, 2), dtype=bool)
    for i, fr in enumerate(frames):
        if not isinstance(fr, dict) or "t" not in fr:
            raise SchemaError(f"frame {i}: missing 't'")
        t = fr["t"]
        if not isinstance(t, int) or isinstance(t, bool) or t < 0:
            raise SchemaError(f"frame {i}: 't' must be a non-negative integer")
        times[i] = t
        for h, key in ((Chirality.LEFT, "left"), (Chirality.RIGHT, "right")):
            arr = _parse_hand(fr.get(key), f"frame {i} ({key})")
            if arr is not None:
                joints[i, h] = arr[:, :2]
                conf[i, h] = arr[:, 2]
                present[i, h] = True
    return HandSequence(times, joints, conf, present, label=label, source_id=str(doc["source_id"]),
                        fps=float(doc["fps"]))


def serialize_sequence(seq: HandSequence) -> dict:
    frames = []
    for i, t in enumerate(seq.times):
        fr: dict = {"t": int(t)}
        for h, key in ((Chirality.LEFT, "left"), (Chirality.RIGHT, "right")):
            if seq.present[i, h]:
                fr[key] = np.concatenate([seq.joints[i, h], seq.confidence[i, h, :, None]], 1).tolist()
            else:
                fr[key] = None
        frames.append(fr)
    return {"source_id": seq.source_id, "fps": seq.fps, "label": seq.label, "frames": frames}


def load_sequence(path) -> HandSequence:
    with open(path) as fh:
        return parse_sequence(json.load(fh))


def save_sequence(seq: HandSequence, path) -> None:
    Path(path).write_text(json.dumps(serialize_sequence(seq)))


def load_dataset(directory) -> list[HandSequence]:
    files = sorted(Path(directory).glob("*.json"))
    files = [f for f in files if f.name != "manifest.json"]
    if not files:
        raise FileNotFoundError(f"no pose-JSON files in {directory}")
    return [load_sequence(f) for f in files]


# -- crop normalization ----------------------------------------------------------

def crop_transform(crop_box) -> tuple[float, np.ndarray]:
    """Scale and centre for the map sending ``crop_box`` into the 256x256 crop."""
    x0, y0, x1, y1 = (float(v) for v in crop_box)
    w, h = x1 - x0, y1 - y0
    if not (w > 0 and h > 0):
        raise ValueError(f"degenerate crop box {crop_box}")
    return CROP / max(w, h), np.array([(x0 + x1) / 2, (y0 + y1) / 2])


def normalize_to_crop(frame: HandPoseFrame, crop_box) -> HandPoseFrame:
    """Affine map to crop coordinates; the shorter side is padded so aspect is kept."""
    scale, centre = crop_transform(crop_box)
    joints = (frame.joints - centre) * scale + CROP / 2
    return HandPoseFrame(joints, frame.confidence.copy(), frame.chirality, frame.time_index)


def denormalize_from_crop(joints: np.ndarray, crop_box) -> np.ndarray:
    scale, centre = crop_transform(crop_box)
    return (np.asarray(joints) - CROP / 2) / scale + centre


def hand_crop_box(joints: np.ndarray, confidence: np.ndarray) -> np.ndarray | None:
    """Square box around the detected joints, side 2.2x their largest extent."""
    seen = confidence > 0
    if not seen.any():
        return None
    pts = joints[seen]
    lo, hi = pts.min(0), pts.max(0)
    extent = float((hi - lo).max())
    if extent <= 0:
        extent = 1.0
    centre = pts.mean(0)
    half = CROP_MARGIN * extent / 2
    return np.array([centre[0] - half, centre[1] - half, centre[0] + half, centre[1] + half])


@dataclass
class CropTokens:
    """Per-frame, per-hand crop-space joints ready for embedding.

    Joints with zero confidence are placed at the crop centre.
    """

    joints: np.ndarray       # (L, 2, 21, 2) in [0, 256] crop pixels
    confidence: np.ndarray   # (L, 2, 21)
    boxes: np.ndarray        # (L, 2, 4), NaN where the hand is absent


def crop_sequence(seq: HandSequence) -> CropTokens:
    L = len(seq)
    joints = np.full((L, 2, N_JOINTS, 2), CROP / 2)
    boxes = np.full((L, 2, 4), np.nan)
    for i in range(L):
        for h in range(2):
            box = hand_crop_box(seq.joints[i, h], seq.confidence[i, h])
            if box is None:
                continue
            boxes[i, h] = box
            scale, centre = crop_transform(box)
            joints[i, h] = (seq.joints[i, h] - centre) * scale + CROP / 2
    joints[seq.confidence == 0] = CROP / 2
    return CropTokens(joints, seq.confidence.copy(), boxes)


# -- temporal sampling --------------------------------------------------------------

def sample_frames(sequence, T: int = 32, mode: str = "center", rng: np.random.Generator | None = None) -> np.ndarray:
    """T stratified frame positions: stratum midpoints ("center") or uniform draws ("random")."""
    if T <= 0:
        raise ValueError("T must be positive")
    length = sequence if isinstance(sequence, (int, np.integer)) else len(sequence)
    if length <= 0:
        raise ValueError("cannot sample from an empty sequence")
    width = length / T
    lo = np.arange(T) * width
    if mode == "center":
        pos = lo + width / 2
    elif mode == "random":
        rng = rng if rng is not None else np.random.default_rng()
        pos = lo + rng.random(T) * width
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return np.minimum(np.floor(pos).astype(np.int64), length - 1)


# -- synthetic signer --------------------------------------------------------------

@dataclass
class SynthConfig:
    class_count: int = 10
    sequences_per_class: int = 50
    sequence_length: int = 48
    noise_sigma: float = 0.01
    dropout_rate: float = 0.02
    frame_drop_rate: float = 0.01
    seed: int = 0
    image_size: float = 512.0
    motif_amplitude: float = 0.6
    style_jitter: float = 0.35

    def validate(self) -> "SynthConfig":
        for name in ("noise_sigma", "dropout_rate", "frame_drop_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("class_count", "sequences_per_class", "sequence_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.style_jitter < 0 or self.motif_amplitude < 0:
            raise ValueError("motif_amplitude and style_jitter must be non-negative")
        return self


@dataclass
class _Motif:
    base: np.ndarray      # (2, 25)
    amp: np.ndarray       # (2, K, 25)
    freq: np.ndarray      # (2, K)
    phase: np.ndarray     # (2, K, 25)
    cam: np.ndarray       # (2, 3) camera axis-angle
    path: np.ndarray      # (2, 2, 2) image-plane drift amplitude / frequency


def _class_motifs(cfg: SynthConfig, theta_dim: int, rng: np.random.Generator) -> list[_Motif]:
    motifs = []
    for _ in range(cfg.class_count):
        K = int(rng.integers(2, 5))
        base = rng.normal(0.0, 0.6 * cfg.motif_amplitude, size=(2, theta_dim))
        base[:, :3] = rng.normal(0.0, 0.25, size=(2, 3))
        amp = rng.normal(0.0, cfg.motif_amplitude / math.sqrt(K), size=(2, K, theta_dim))
        amp[:, :, :3] *= 0.3
        freq = rng.uniform(0.5, 3.0, size=(2, K))
        phase = rng.uniform(0, 2 * np.pi, size=(2, K, theta_dim))
        cam = rng.normal(0.0, 0.35, size=(2, 3))
        path = rng.uniform(0.0, 1.0, size=(2, 2, 2))
        motifs.append(_Motif(base, amp, freq, phase, cam, path))
    return motifs


def synth_generate(cfg: SynthConfig, asset=None) -> list[HandSequence]:
    """Labelled synthetic signing: per-class sinusoidal motifs in pose-coefficient
    space, rendered through the hand model, then jittered and dropped out.
    Deterministic given ``cfg.seed``.
    """
    from .handmodel import AssetError, joints_3d, synth_asset
    from .kernels import rodrigues
    from .numerics import no_grad
    from .numerics.autodiff import Tensor

    cfg.validate()
    if asset is None:
        asset = synth_asset(0)
    if asset.n_output_joints != N_JOINTS:
        raise AssetError(f"synthetic signing needs a {N_JOINTS}-joint hand model, asset has {asset.n_output_joints}")
    rng = np.random.default_rng(cfg.seed)
    theta_dim, n_shape = asset.theta_dim, asset.n_shape
    motifs = _class_motifs(cfg, theta_dim, rng)
    L = cfg.sequence_length
    tau = np.arange(L) / L
    hand_px = CROP / CROP_MARGIN
    sigma = cfg.noise_sigma * CROP
    out = []
    for c in range(cfg.class_count):
        mo = motifs[c]
        K = mo.freq.shape[1]
        for s in range(cfg.sequences_per_class):
            j = cfg.style_jitter
            amp_scale = 1.0 + j * rng.normal(size=(2, 1, 1))
            phase_shift = j * rng.normal(size=(2, K, 1))
            speed = np.exp(0.3 * j * rng.normal())
            offset = rng.uniform(0.0, 1.0)
            u = (tau * speed + offset * j)[:, None, None]
            # theta[h, t, :]
            theta = mo.base[:, None, :] + j * 0.5 * rng.normal(size=(2, 1, theta_dim))
            for k in range(K):
                wave = np.sin(2 * np.pi * mo.freq[:, k][:, None, None] * u.transpose(1, 0, 2)
                              + mo.phase[:, k][:, None, :] + phase_shift[:, k][:, None, :])
                theta = theta + (amp_scale * mo.amp[:, k][:, None, :]) * wave
            beta = np.repeat(rng.normal(0.0, 0.4, size=(1, 1, n_shape)), 2, axis=0)
            beta = np.repeat(beta, L, axis=1)
            cam = mo.cam + j * 0.3 * rng.normal(size=(2, 3))
            with no_grad():
                j3 = joints_3d(theta.reshape(-1, theta_dim), beta.reshape(-1, n_shape), asset,
                               dtype=np.float64).data.reshape(2, L, -1, 3)
                R = rodrigues(Tensor(cam)).data
            rot = np.einsum("hij,hlnj->hlni", R, j3)[..., :2]
            extent = np.ptp(rot, axis=2).max(-1).mean(1)  # (2,)
            scale = hand_px / extent * np.exp(0.1 * rng.normal(size=2))
            xy = rot * scale[:, None, None, None]
            xy[0, ..., 0] *= -1.0  # left hand: mirror image of the right-hand model
            centres = np.array([[0.35, 0.55], [0.65, 0.55]]) * cfg.image_size
            centres = centres + rng.normal(0.0, 0.03 * cfg.image_size, size=(2, 2))
            drift = 0.08 * cfg.image_size * mo.path[:, 0][:, None, :] * np.sin(
                2 * np.pi * (1 + 2 * mo.path[:, 1][:, None, :]) * tau[None, :, None] * speed)
            xy = xy - xy.mean(axis=2, keepdims=True) + (centres[:, None, :] + drift)[:, :, None, :]
            xy = xy.transpose(1, 0, 2, 3)  # (L, 2, 21, 2)
            conf = np.ones((L, 2, N_JOINTS))
            if sigma > 0:
                jitter = rng.normal(0.0, sigma, size=xy.shape)
                xy = xy + jitter
                conf = np.clip(np.exp(-(jitter**2).sum(-1) / (2 * sigma**2)), 0.0, 1.0)
            if cfg.dropout_rate > 0:
                drop = rng.random((L, 2, N_JOINTS)) < cfg.dropout_rate
                xy[drop] = 0.0
                conf[drop] = 0.0
            present = np.ones((L, 2), dtype=bool)
            if cfg.frame_drop_rate > 0:
                gone = rng.random((L, 2)) < cfg.frame_drop_rate
                present[gone] = False
                xy[gone] = 0.0
                conf[gone] = 0.0
            # a hand whose every joint dropped out is reported as undetected
            allzero = (conf == 0).all(-1)
            present &= ~allzero
            out.append(HandSequence(np.arange(L), xy, conf, present, label=c,
                                    source_id=f"synth_c{c:03d}_s{s:04d}", fps=25.0))
    return out


def split_dataset(sequences: list[HandSequence], heldout_fraction: float, seed: int):
    """Deterministic per-class split into (train, held-out)."""
    rng = np.random.default_rng(seed)
    by_label: dict = {}
    for i, s in enumerate(sequences):
        by_label.setdefault(s.label, []).append(i)
    train, held = [], []
    for label in sorted(by_label, key=lambda x: (x is None, x)):
        idx = np.array(by_label[label])
        rng.shuffle(idx)
        k = int(round(len(idx) * heldout_fraction))
        held += idx[:k].tolist()
        train += idx[k:].tolist()
    return [sequences[i] for i in sorted(train)], [sequences[i] for i in sorted(held)]
