"""Hand-model-aware decoder: latent head, blendshapes + linear blend skinning,
21-joint extraction and weak-perspective projection.

Any asset with the MANO interface plugs in (template, shape/pose blendshapes,
pose PCA, joint regressor, skinning weights, fingertip vertices).  Since the
learned MANO parameters are licensed, :func:`synth_asset` procedurally builds a
778-vertex / 1538-face stand-in with the same array layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .kernels import SkinningWeights, rodrigues, skin
from .numerics import ad
from .numerics.autodiff import Tensor
from .numerics.nn import Linear, Module

ASSET_MAGIC = b"HMA1"
ASSET_VERSION = 1

# MANO joint layout: 0 wrist, 1-3 index, 4-6 middle, 7-9 pinky, 10-12 ring, 13-15 thumb
MANO_PARENTS = np.array([-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 0, 10, 11, 0, 13, 14], dtype=np.int32)
# tip vertices for index, middle, ring, pinky, thumb
MANO_FINGERTIPS = np.array([333, 443, 555, 678, 734], dtype=np.int32)
# rows of [16 articulated joints | 5 tips] in wrist, thumb, index, middle, ring, pinky order
MANO_OUTPUT_ORDER = np.array([0, 13, 14, 15, 20, 1, 2, 3, 16, 4, 5, 6, 17, 10, 11, 12, 18, 7, 8, 9, 19],
                             dtype=np.int32)

CROP = 256.0
CROP_MARGIN = 2.2


class AssetError(ValueError):
    pass


@dataclass(eq=False)
class HandModelAsset:
    template: np.ndarray          # (V, 3)
    faces: np.ndarray             # (F, 3)
    shape_basis: np.ndarray       # (V, 3, S)
    pose_basis: np.ndarray        # (V, 3, 3(J-1))
    pose_pca: np.ndarray          # (3(J-1), P)
    joint_regressor: np.ndarray   # (J, V)
    skinning: np.ndarray          # (V, J)
    fingertips: np.ndarray        # (n_tips,)
    parents: np.ndarray = field(default_factory=lambda: MANO_PARENTS.copy())
    output_order: np.ndarray = field(default_factory=lambda: MANO_OUTPUT_ORDER.copy())
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    ARRAYS = ("template", "faces", "shape_basis", "pose_basis", "pose_pca", "joint_regressor",
              "skinning", "fingertips", "parents", "output_order")

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joint_regressor.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[2]

    @property
    def n_pose_coeffs(self) -> int:
        return self.pose_pca.shape[1]

    @property
    def theta_dim(self) -> int:
        return 3 + self.n_pose_coeffs

    @property
    def n_output_joints(self) -> int:
        return len(self.output_order)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.ARRAYS}

    def validate(self, tol: float = 1e-5) -> "HandModelAsset":
        """Check every structural invariant; raises :class:`AssetError` listing all violations."""
        problems = []
        V, J = self.template.shape[0], self.joint_regressor.shape[0]
        if self.template.ndim != 2 or self.template.shape[1] != 3:
            problems.append(f"template must be (V, 3), got {self.template.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            problems.append(f"faces must be (F, 3), got {self.faces.shape}")
        elif self.faces.size and (self.faces.min() < 0 or self.faces.max() >= V):
            problems.append(f"faces index outside [0, {V})")
        if self.shape_basis.ndim != 3 or self.shape_basis.shape[:2] != (V, 3):
            problems.append(f"shape_basis must be (V, 3, S), got {self.shape_basis.shape}")
        if self.pose_basis.shape != (V, 3, 3 * (J - 1)):
            problems.append(f"pose_basis must be {(V, 3, 3 * (J - 1))}, got {self.pose_basis.shape}")
        if self.pose_pca.ndim != 2 or self.pose_pca.shape[0] != 3 * (J - 1):
            problems.append(f"pose_pca must have {3 * (J - 1)} rows, got {self.pose_pca.shape}")
        if self.joint_regressor.shape != (J, V):
            problems.append(f"joint_regressor must be (J, V), got {self.joint_regressor.shape}")
        else:
            rs = self.joint_regressor.sum(1)
            if np.abs(rs - 1.0).max() > tol:
                problems.append(f"joint_regressor rows must sum to 1 (worst {rs[np.abs(rs - 1).argmax()]:.6g})")
        if self.skinning.shape != (V, J):
            problems.append(f"skinning must be (V, J)=({V}, {J}), got {self.skinning.shape}")
        else:
            if (self.skinning < 0).any():
                problems.append("skinning weights must be non-negative")
            ws = self.skinning.sum(1)
            if np.abs(ws - 1.0).max() > tol:
                problems.append(f"skinning rows must sum to 1 (worst {ws[np.abs(ws - 1).argmax()]:.6g})")
        if self.fingertips.ndim != 1 or (self.fingertips.size and
                                         (self.fingertips.min() < 0 or self.fingertips.max() >= V)):
            problems.append("fingertips must be vertex indices")
        if self.parents.shape != (J,) or self.parents[0] != -1 or any(
                not 0 <= self.parents[k] < k for k in range(1, J)):
            problems.append("parents must be a topologically ordered tree rooted at joint 0")
        n_src = J + len(self.fingertips)
        if self.output_order.ndim != 1 or self.output_order.min() < 0 or self.output_order.max() >= n_src:
            problems.append(f"output_order must index the {n_src} articulated+tip joints")
        for name in self.ARRAYS:
            arr = getattr(self, name)
            if arr.dtype.kind == "f" and not np.isfinite(arr).all():
                problems.append(f"{name} contains non-finite values")
        if problems:
            raise AssetError("invalid hand-model asset:\n  " + "\n  ".join(problems))
        return self

    def tables(self, dtype=np.float32) -> "_Tables":
        key = np.dtype(dtype).str
        if key not in self._cache:
            self._cache[key] = _Tables(self, np.dtype(dtype).type)
        return self._cache[key]


class _Tables:
    """Flattened, dtype-cast decoder constants derived from an asset."""

    def __init__(self, asset: HandModelAsset, dtype):
        V, J = asset.n_vertices, asset.n_joints
        f64 = np.float64
        T = asset.template.astype(f64)
        S = asset.shape_basis.astype(f64)
        Jreg = asset.joint_regressor.astype(f64)
        self.dtype = dtype
        self.n_joints = J
        self.parents = asset.parents.astype(int)
        self.template = T.astype(dtype)
        self.shape_mat = S.transpose(2, 0, 1).reshape(S.shape[2], V * 3).astype(dtype)
        self.pose_mat = asset.pose_basis.astype(f64).transpose(2, 0, 1).reshape(-1, V * 3).astype(dtype)
        self.pca_t = asset.pose_pca.astype(f64).T.astype(dtype)
        self.joint_template = (Jreg @ T).astype(dtype)
        self.joint_shape_mat = np.einsum("jv,vcs->sjc", Jreg, S).reshape(S.shape[2], J * 3).astype(dtype)
        W = asset.skinning.astype(f64)
        W = W / W.sum(1, keepdims=True)
        self.weights = SkinningWeights(W)
        self.fingertips = asset.fingertips.astype(int)
        self.tip_weights = self.weights.subset(self.fingertips)
        self.output_order = asset.output_order.astype(int)
        tip_cols = (self.fingertips[:, None] * 3 + np.arange(3)).reshape(-1)
        self.tip_template = self.template[self.fingertips]
        self.tip_shape_mat = self.shape_mat[:, tip_cols]
        self.tip_pose_mat = self.pose_mat[:, tip_cols]


def _tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _flat(x: Tensor, width: int) -> Tensor:
    return x.reshape((-1, width)) if x.ndim != 2 else x


# -- rotations & kinematics ---------------------------------------------------

def _articulate(theta: Tensor, tab: _Tables) -> tuple[Tensor, Tensor]:
    """theta (N, 3+P) -> per-joint rotations (N, J, 3, 3) and pose features (N, 3(J-1))."""
    n = theta.shape[0]
    J = tab.n_joints
    aa = ad.matmul(theta[:, 3:], tab.pca_t)
    axis_angles = ad.concat([theta[:, :3].reshape((n, 1, 3)), aa.reshape((n, J - 1, 3))], axis=1)
    return rodrigues(axis_angles), aa


def pose_to_rotations(theta, asset: HandModelAsset, dtype=None) -> Tensor:
    """Global rotation from entries 0..2, local rotations from the pose-PCA coefficients."""
    theta = _tensor(theta, dtype or np.float32)
    tab = asset.tables(theta.dtype)
    lead = theta.shape[:-1]
    R, _ = _articulate(_flat(theta, asset.theta_dim), tab)
    return R.reshape(lead + (asset.n_joints, 3, 3))


def _kinematics(R: Tensor, joints: Tensor, parents: np.ndarray) -> tuple[Tensor, Tensor]:
    """Chain local rotations into skinning transforms (N, J, 3, 4) and posed joints (N, J, 3).

    Translations are accumulated as ``rel[k] = rel[parent] + (Rg[parent] - Rg[k]) J_k``
    so identity rotations give exactly zero offsets.
    """
    n, J = R.shape[0], R.shape[1]
    local = [R[:, k] for k in range(J)]
    pos = [joints[:, k].reshape((n, 3, 1)) for k in range(J)]
    Rg: list[Tensor] = [local[0]]
    rel: list[Tensor] = [pos[0] - ad.matmul(local[0], pos[0])]
    for k in range(1, J):
        p = parents[k]
        Rg.append(ad.matmul(Rg[p], local[k]))
        rel.append(rel[p] + ad.matmul(Rg[p] - Rg[k], pos[k]))
    Rg_all = ad.stack(Rg, axis=1)
    rel_all = ad.stack(rel, axis=1)
    transforms = ad.concat([Rg_all, rel_all], axis=-1)
    posed = rel_all + ad.matmul(Rg_all, joints.reshape((n, J, 3, 1)))
    return transforms, posed.reshape((n, J, 3))


def _pose(theta: Tensor, beta: Tensor, tab: _Tables, tips_only: bool):
    n = theta.shape[0]
    R, aa = _articulate(theta, tab)
    J = tab.n_joints
    joints = ad.add(ad.matmul(beta, tab.joint_shape_mat), tab.joint_template.reshape(-1)).reshape((n, J, 3))
    transforms, posed_joints = _kinematics(R, joints, tab.parents)
    if tips_only:
        base, smat, pmat, weights = tab.tip_template, tab.tip_shape_mat, tab.tip_pose_mat, tab.tip_weights
    else:
        base, smat, pmat, weights = tab.template, tab.shape_mat, tab.pose_mat, tab.weights
    nv = base.shape[0]
    offsets = ad.matmul(beta, smat) + ad.matmul(aa, pmat)
    rest = ad.add(offsets.reshape((n, nv, 3)), base)
    return skin(transforms, rest, weights), posed_joints


def lbs_mesh(theta, beta, asset: HandModelAsset, dtype=None) -> Tensor:
    """Posed mesh vertices ``(..., V, 3)``: blendshapes then linear blend skinning."""
    theta = _tensor(theta, dtype or np.float32)
    beta = _tensor(beta, theta.dtype)
    lead = theta.shape[:-1]
    tab = asset.tables(theta.dtype)
    verts, _ = _pose(_flat(theta, asset.theta_dim), _flat(beta, asset.n_shape), tab, tips_only=False)
    return verts.reshape(lead + (asset.n_vertices, 3))


def joints_3d(theta, beta, asset: HandModelAsset, mesh=None, dtype=None) -> Tensor:
    """21 joints ``(..., 21, 3)``: articulated joints plus fingertip vertices, in pose-JSON order.

    With ``mesh`` given, tips are read from it; otherwise only the tip vertices
    are skinned (same values, far cheaper).
    """
    theta = _tensor(theta, dtype or np.float32)
    beta = _tensor(beta, theta.dtype)
    lead = theta.shape[:-1]
    tab = asset.tables(theta.dtype)
    th, be = _flat(theta, asset.theta_dim), _flat(beta, asset.n_shape)
    if mesh is None:
        tips, posed = _pose(th, be, tab, tips_only=True)
    else:
        mesh = _tensor(mesh, theta.dtype)
        _, posed = _pose(th, be, tab, tips_only=True)
        tips = mesh.reshape((-1, asset.n_vertices, 3))[:, tab.fingertips]
    full = ad.concat([posed, tips], axis=1)
    return full[:, tab.output_order].reshape(lead + (asset.n_output_joints, 3))


def project_weak_perspective(joints3d, rotation, offset, scale) -> Tensor:
    """``scale * drop_z(rotation @ J) + offset`` for joints ``(..., n, 3)``."""
    joints3d = _tensor(joints3d, np.float32)
    rotation = _tensor(rotation, joints3d.dtype)
    offset = _tensor(offset, joints3d.dtype)
    scale = _tensor(scale, joints3d.dtype)
    rotated = ad.matmul(joints3d, rotation.swapaxes(-1, -2))
    xy = rotated[..., :2]
    return xy * scale.reshape(scale.shape + (1, 1)) + offset.reshape(offset.shape[:-1] + (1, 2))


# -- latent head ---------------------------------------------------------------

@dataclass
class LatentFrame:
    theta: Tensor
    beta: Tensor
    cam_rotation: Tensor  # axis-angle
    cam_offset: Tensor
    cam_scale: Tensor

    def rotation_matrix(self) -> Tensor:
        return rodrigues(self.cam_rotation)


class LatentHead(Module):
    """One linear map from encoder features to pose, shape and camera.

    ``cam_scale = scale_unit * softplus(raw)`` and ``cam_offset = offset_unit * raw``;
    the units are fixed constants (1 by default) that keep raw outputs near 1.
    """

    def __init__(self, d: int, asset: HandModelAsset, rng: np.random.Generator, dtype=np.float32,
                 gain: float = 1.0, scale_unit: float = 1.0, offset_unit: float = 1.0):
        self.n_theta = asset.theta_dim
        self.n_shape = asset.n_shape
        self.width = self.n_theta + self.n_shape + 6
        self.linear = Linear(d, self.width, rng, dtype, gain=gain)
        self._scale_unit = float(scale_unit)
        self._offset_unit = float(offset_unit)

    def set_camera_prior(self, offset: np.ndarray, scale: float) -> None:
        """Bias the head so zero features decode to the given camera."""
        b = self.linear.bias.data
        b[-3:-1] = np.asarray(offset) / self._offset_unit
        raw = scale / self._scale_unit
        b[-1] = raw + np.log(-np.expm1(-raw))  # inverse softplus

    def __call__(self, features: Tensor) -> LatentFrame:
        out = self.linear(features)
        i = self.n_theta
        j = i + self.n_shape
        return LatentFrame(
            theta=out[..., :i],
            beta=out[..., i:j],
            cam_rotation=out[..., j:j + 3],
            cam_offset=out[..., j + 3:j + 5] * self._offset_unit,
            cam_scale=ad.softplus(out[..., j + 5]) * self._scale_unit,
        )


def mirror_plane(asset: HandModelAsset) -> float:
    """x of the plane through the rest hand's centre; left hands reflect across it."""
    if "mirror_plane" not in asset._cache:
        rest = joints_3d(np.zeros(asset.theta_dim), np.zeros(asset.n_shape), asset, dtype=np.float64).data
        asset._cache["mirror_plane"] = float(0.5 * (rest[:, 0].max() + rest[:, 0].min()))
    return asset._cache["mirror_plane"]


def mirror_joints(joints3d: Tensor, mirror, plane: float) -> Tensor:
    """Reflect ``x -> 2 * plane - x`` where ``mirror`` is true (the left-hand model)."""
    lead = joints3d.shape[:-2]
    mirror = np.broadcast_to(np.asarray(mirror, dtype=bool), lead)
    fx = np.ones(lead + (1, 3))
    fx[..., 0, 0] = np.where(mirror, -1.0, 1.0)
    sx = np.zeros(lead + (1, 3))
    sx[..., 0, 0] = np.where(mirror, 2.0 * plane, 0.0)
    return joints3d * fx.astype(joints3d.dtype) + sx.astype(joints3d.dtype)


def decode_latent(latent: LatentFrame, asset: HandModelAsset, mirror=None) -> tuple[Tensor, Tensor]:
    """Latent frames -> (projected 2D joints ``(..., 21, 2)``, 3D joints ``(..., 21, 3)``).

    ``mirror`` (broadcast over the leading axes) flags left-hand tokens, which
    are decoded with the reflected hand model.
    """
    j3 = joints_3d(latent.theta, latent.beta, asset)
    if mirror is not None and np.any(mirror):
        j3 = mirror_joints(j3, mirror, mirror_plane(asset))
    j2 = project_weak_perspective(j3, latent.rotation_matrix(), latent.cam_offset, latent.cam_scale)
    return j2, j3


def rest_camera(asset: HandModelAsset) -> tuple[np.ndarray, float]:
    """Camera offset/scale that places the rest hand like a hand crop (centred, 1/2.2 of the side)."""
    rest = joints_3d(np.zeros(asset.theta_dim), np.zeros(asset.n_shape), asset, dtype=np.float64).data
    xy = rest[:, :2]
    extent = float((xy.max(0) - xy.min(0)).max())
    scale = CROP / CROP_MARGIN / extent
    centre = 0.5 * (xy.max(0) + xy.min(0))
    return CROP / 2 - scale * centre, scale


class HandDecoder(Module):
    def __init__(self, d: int, asset: HandModelAsset, rng: np.random.Generator, dtype=np.float32,
                 gain: float = 0.1):
        offset, scale = rest_camera(asset)
        self._asset = asset
        self.head = LatentHead(d, asset, rng, dtype, gain=gain, scale_unit=scale, offset_unit=CROP / 2)
        self.head.set_camera_prior(offset, scale)

    @property
    def asset(self) -> HandModelAsset:
        return self._asset

    def __call__(self, features: Tensor, mirror=None):
        latent = self.head(features)
        j2, j3 = decode_latent(latent, self._asset, mirror)
        return latent, j2, j3


# -- persistence -----------------------------------------------------------------

def save_asset(asset: HandModelAsset, path) -> None:
    container.write(path, ASSET_MAGIC, {"version": ASSET_VERSION}, asset.arrays())


def load_asset(path) -> HandModelAsset:
    """Read and validate an ``HMA1`` asset; ``parents``/``output_order`` default to MANO's."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"hand-model asset not found: {path}")
    meta, arrays = container.read(path, ASSET_MAGIC)
    if meta.get("version") != ASSET_VERSION:
        raise AssetError(f"unsupported asset version {meta.get('version')}")
    required = HandModelAsset.ARRAYS[:8]
    missing = [n for n in required if n not in arrays]
    if missing:
        raise AssetError(f"asset missing arrays: {missing}")
    kwargs = {n: arrays[n] for n in HandModelAsset.ARRAYS if n in arrays}
    return HandModelAsset(**kwargs).validate()


# -- synthetic asset ---------------------------------------------------------------

_FINGERS = ("index", "middle", "ring", "pinky", "thumb")
# MANO joint ids per finger (proximal -> distal)
_FINGER_JOINTS = {"index": (1, 2, 3), "middle": (4, 5, 6), "pinky": (7, 8, 9), "ring": (10, 11, 12),
                  "thumb": (13, 14, 15)}
# base position (m), direction in degrees from +y toward +x, tilt toward +z, segment lengths, radius
_FINGER_GEOM = {
    "index": ((0.025, 0.088, 0.0), 8.0, 0.0, (0.040, 0.025, 0.022), 0.0090),
    "middle": ((0.002, 0.093, 0.0), 0.0, 0.0, (0.045, 0.028, 0.024), 0.0092),
    "ring": ((-0.020, 0.088, 0.0), -7.0, 0.0, (0.041, 0.026, 0.022), 0.0086),
    "pinky": ((-0.039, 0.078, 0.0), -15.0, 0.0, (0.032, 0.020, 0.020), 0.0075),
    "thumb": ((0.030, 0.022, 0.008), 50.0, 20.0, (0.040, 0.032, 0.028), 0.0100),
}
_FINGER_RINGS = {"index": 12, "middle": 12, "ring": 12, "pinky": 11, "thumb": 12}
_FINGER_SIDES = 10
_PALM_SIDES = 16
_PALM_RINGS = 11


def _tube_faces(start: int, rings: int, sides: int) -> list[tuple[int, int, int]]:
    faces = []
    for i in range(rings - 1):
        for j in range(sides):
            a = start + i * sides + j
            b = start + i * sides + (j + 1) % sides
            c = a + sides
            d = b + sides
            faces += [(a, b, d), (a, d, c)]
    return faces


def _cap(apex: int, ring_start: int, sides: int, flip: bool) -> list[tuple[int, int, int]]:
    out = []
    for j in range(sides):
        a, b = ring_start + j, ring_start + (j + 1) % sides
        out.append((apex, b, a) if flip else (apex, a, b))
    return out


def _orthonormal_columns(raw: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(raw)
    return q * np.sign(np.diag(r))


def synth_asset(seed: int = 0) -> HandModelAsset:
    """Procedural 778-vertex hand: a closed palm tube plus five closed finger tubes joined by webs."""
    rng = np.random.default_rng(seed)
    verts: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []
    weights: list[np.ndarray] = []
    J = 16
    joints = np.zeros((J, 3))
    regress_sets: dict[int, list[int]] = {}

    def add(points: np.ndarray, w: np.ndarray) -> int:
        start = sum(len(v) for v in verts)
        verts.append(points)
        weights.append(w)
        return start

    # palm: wrist ring at y=0 (wrist joint at the origin) up to the knuckles
    ys = np.linspace(0.0, 0.080, _PALM_RINGS)
    phi = np.linspace(0, 2 * np.pi, _PALM_SIDES, endpoint=False)
    ring_pts = []
    for y in ys:
        half_w = 0.030 + 0.016 * (y / ys[-1])
        half_t = 0.014 - 0.003 * (y / ys[-1])
        ring_pts.append(np.stack([half_w * np.cos(phi), np.full_like(phi, y), half_t * np.sin(phi)], 1))
    palm = np.concatenate(ring_pts + [np.array([[0.0, -0.004, 0.0]]), np.array([[0.0, ys[-1] + 0.006, 0.0]])])
    pw = np.zeros((len(palm), J))
    pw[:, 0] = 1.0
    p0 = add(palm, pw)
    faces += _tube_faces(p0, _PALM_RINGS, _PALM_SIDES)
    faces += _cap(p0 + _PALM_RINGS * _PALM_SIDES, p0, _PALM_SIDES, flip=True)
    faces += _cap(p0 + _PALM_RINGS * _PALM_SIDES + 1, p0 + (_PALM_RINGS - 1) * _PALM_SIDES, _PALM_SIDES, flip=False)
    regress_sets[0] = list(range(p0, p0 + _PALM_SIDES))

    tips = {}
    base_rings = {}
    finger_dirs = {}
    for name in _FINGERS:
        base, yaw, tilt, lengths, radius = _FINGER_GEOM[name]
        base = np.array(base)
        yaw_r, tilt_r = np.radians(yaw), np.radians(tilt)
        d = np.array([np.sin(yaw_r) * np.cos(tilt_r), np.cos(yaw_r) * np.cos(tilt_r), np.sin(tilt_r)])
        finger_dirs[name] = d
        u = np.cross(d, [0.0, 0.0, 1.0])
        u /= np.linalg.norm(u)
        w_axis = np.cross(u, d)
        jids = _FINGER_JOINTS[name]
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        for i, jid in enumerate(jids):
            joints[jid] = base + cum[i] * d
        n_rings = _FINGER_RINGS[name]
        # four rings per proximal/middle segment, the rest on the distal one
        s_vals = []
        for seg in range(2):
            s_vals += list(cum[seg] + lengths[seg] * np.arange(4) / 4)
        rest = n_rings - 8
        s_vals += list(cum[2] + lengths[2] * 0.85 * np.arange(rest) / max(rest - 1, 1))
        s_vals = np.array(s_vals)
        sphi = np.linspace(0, 2 * np.pi, _FINGER_SIDES, endpoint=False)
        pts = []
        for s in s_vals:
            r = radius * (1.0 - 0.25 * s / cum[-1])
            centre = base + s * d
            pts.append(centre + r * (np.cos(sphi)[:, None] * u + np.sin(sphi)[:, None] * w_axis))
        tip_point = base + cum[-1] * d
        fpts = np.concatenate(pts + [(base - 0.004 * d)[None], tip_point[None]])
        # smooth skinning along the finger axis
        s_all = np.concatenate([np.repeat(s_vals, _FINGER_SIDES), [-0.004, cum[-1]]])
        fw = np.zeros((len(fpts), J))
        sigma = 0.006
        for i, jid in enumerate(jids):
            lo, hi = cum[i], cum[i + 1] if i < 2 else cum[-1] + 1.0
            dist = np.maximum(0.0, np.maximum(lo - s_all, s_all - hi))
            fw[:, jid] = np.exp(-0.5 * (dist / sigma) ** 2)
        dist_palm = np.maximum(0.0, s_all)
        fw[:, 0] = np.exp(-0.5 * (dist_palm / sigma) ** 2)
        fw[fw < 1e-3] = 0.0
        fw /= fw.sum(1, keepdims=True)
        f0 = add(fpts, fw)
        faces += _tube_faces(f0, n_rings, _FINGER_SIDES)
        apex_base = f0 + n_rings * _FINGER_SIDES
        faces += _cap(apex_base, f0, _FINGER_SIDES, flip=True)
        faces += _cap(apex_base + 1, f0 + (n_rings - 1) * _FINGER_SIDES, _FINGER_SIDES, flip=False)
        tips[name] = apex_base + 1
        base_rings[name] = f0
        for i, jid in enumerate(jids):
            ring = 4 * i
            regress_sets[jid] = list(range(f0 + ring * _FINGER_SIDES, f0 + (ring + 1) * _FINGER_SIDES))

    V = np.concatenate(verts)
    W = np.concatenate(weights)
    # webbing between neighbouring fingers: two triangles per gap
    for a_name, b_name in (("index", "middle"), ("middle", "ring"), ("ring", "pinky")):
        a0, b0 = base_rings[a_name], base_rings[b_name]
        toward = V[b0] - V[a0]

        def facing(start, direction):
            ring = np.arange(start + _FINGER_SIDES, start + 2 * _FINGER_SIDES)
            return ring[np.argmax(V[ring] @ direction)] - _FINGER_SIDES

        ia, ib = facing(a0, toward), facing(b0, -toward)
        faces += [(ia, ib, ia + _FINGER_SIDES), (ib, ib + _FINGER_SIDES, ia + _FINGER_SIDES)]

    nv = len(V)
    Jreg = np.zeros((J, nv))
    for jid, idx in regress_sets.items():
        Jreg[jid, idx] = 1.0 / len(idx)
    # re-centre joint 0 exactly on the wrist ring centre
    joints[0] = Jreg[0] @ V
    for jid in range(1, J):
        joints[jid] = Jreg[jid] @ V

    # shape: smooth linear deformation fields plus per-finger length changes
    fields = []
    for _ in range(6):
        M = rng.normal(size=(3, 3))
        fields.append((V @ M.T).reshape(-1))
    for name in _FINGERS[:4]:
        jids = _FINGER_JOINTS[name]
        mask = (W[:, list(jids)].sum(1))[:, None]
        fields.append((mask * ((V - joints[jids[0]]) @ finger_dirs[name])[:, None] * finger_dirs[name]).reshape(-1))
    shape = _orthonormal_columns(np.stack(fields, 1), rng) * 0.25
    shape_basis = shape.reshape(nv, 3, 10)

    # pose correctives: localized random fields gated by each joint's skinning weight
    pcols = []
    for k in range(45):
        jid = 1 + k // 3
        M = rng.normal(size=(3, 3))
        pcols.append((W[:, jid:jid + 1] * ((V - joints[jid]) @ M.T)).reshape(-1))
    pose_basis = (_orthonormal_columns(np.stack(pcols, 1), rng) * 0.02).reshape(nv, 3, 45)

    # pose PCA: mostly flexion about each finger's bend axis, some abduction, little twist
    axes = np.zeros((45, 3))
    for name in _FINGERS:
        d = finger_dirs[name]
        u = np.cross(d, [0.0, 0.0, 1.0])
        u /= np.linalg.norm(u)
        w_axis = np.cross(u, d)
        for jid in _FINGER_JOINTS[name]:
            k = jid - 1
            axes[3 * k: 3 * k + 3] = np.stack([u, w_axis, d])
    raw = rng.normal(size=(15, 3, 22)) * np.array([1.0, 0.3, 0.1])[None, :, None]
    aa = np.einsum("kmp,kmc->kcp", raw, axes.reshape(15, 3, 3)).reshape(45, 22)
    pose_pca = _orthonormal_columns(aa, rng)

    fingertips = np.array([tips[n] for n in ("index", "middle", "ring", "pinky", "thumb")], dtype=np.int32)
    W32 = (W / W.sum(1, keepdims=True)).astype(np.float32)
    asset = HandModelAsset(
        template=V.astype(np.float32),
        faces=np.array(faces, dtype=np.int32),
        shape_basis=shape_basis.astype(np.float32),
        pose_basis=pose_basis.astype(np.float32),
        pose_pca=pose_pca.astype(np.float32),
        joint_regressor=Jreg.astype(np.float32),
        skinning=W32,
        fingertips=fingertips,
        parents=MANO_PARENTS.copy(),
        output_order=MANO_OUTPUT_ORDER.copy(),
    )
    return asset.validate()


def toy_asset() -> HandModelAsset:
    """Three joints on the x axis (a 2-bone chain) and four hand-weighted vertices.

    Joints sit at x = 0, 1, 2. Vertex 0 follows joint 0, vertex 1 joint 1,
    vertex 2 joint 2, and vertex 3 is split evenly between joints 1 and 2.
    Pose coefficients are the raw axis-angles (identity PCA), correctives are zero,
    and the single shape direction stretches the chain along x.
    """
    template = np.array([[0.5, 0.0, 0.0], [1.5, 0.0, 0.0], [2.5, 0.0, 0.0], [1.5, 0.2, 0.0]])
    skinning = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.5, 0.5]])
    regressor = np.array([[1.5, -0.5, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0]])
    shape_basis = np.zeros((4, 3, 1))
    shape_basis[:, 0, 0] = template[:, 0]
    return HandModelAsset(
        template=template,
        faces=np.array([[0, 1, 3], [1, 2, 3]], dtype=np.int32),
        shape_basis=shape_basis,
        pose_basis=np.zeros((4, 3, 6)),
        pose_pca=np.eye(6),
        joint_regressor=regressor,
        skinning=skinning,
        fingertips=np.array([2], dtype=np.int32),
        parents=np.array([-1, 0, 1], dtype=np.int32),
        output_order=np.array([0, 1, 2, 3], dtype=np.int32),
    ).validate()
