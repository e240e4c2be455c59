import dataclasses

import numpy as np
import pytest

from handtok.handmodel import (
    AssetError, HandDecoder, LatentHead, decode_latent, joints_3d, lbs_mesh, load_asset, mirror_joints,
    mirror_plane, pose_to_rotations, project_weak_perspective, rest_camera, save_asset,
)
from handtok.numerics import Tensor, value_and_grad
from handtok.numerics.gradcheck import check_directions


def _rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot(axis_angle):
    a = np.linalg.norm(axis_angle)
    if a == 0:
        return np.eye(3)
    k = axis_angle / a
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * K @ K


class TestToyChain:
    """Joints at x = 0, 1, 2; vertices weighted as documented in ``toy_asset``."""

    def _pose(self, toy, rotations):
        theta = np.zeros(9)
        for k, aa in rotations.items():
            theta[3 * k:3 * k + 3] = aa
        return lbs_mesh(theta, np.zeros(1), toy, dtype=np.float64).data

    def test_rest_pose_is_template_exactly(self, toy):
        np.testing.assert_array_equal(self._pose(toy, {}), toy.template)

    def test_bend_at_last_joint(self, toy):
        verts = self._pose(toy, {2: [0.0, 0.0, np.pi / 2]})
        # vertex 2 rotates about (2, 0, 0); vertex 3 averages the rigid and rotated copies
        pivot = np.array([2.0, 0.0, 0.0])
        rotated3 = pivot + _rot_z(np.pi / 2) @ (toy.template[3] - pivot)
        expect = np.array([toy.template[0], toy.template[1],
                           pivot + _rot_z(np.pi / 2) @ (toy.template[2] - pivot),
                           0.5 * toy.template[3] + 0.5 * rotated3])
        np.testing.assert_allclose(verts, expect, atol=1e-9)

    def test_chained_bends(self, toy, rng):
        a1, a2 = rng.normal(size=3), rng.normal(size=3)
        verts = self._pose(toy, {1: a1, 2: a2})
        j1, j2 = np.array([1.0, 0, 0]), np.array([2.0, 0, 0])
        R1, R2 = _rot(a1), _rot(a2)
        G1 = lambda x: j1 + R1 @ (x - j1)  # noqa: E731
        G2 = lambda x: G1(j2 + R2 @ (x - j2))  # noqa: E731
        T = toy.template
        expect = np.array([T[0], G1(T[1]), G2(T[2]), 0.5 * G1(T[3]) + 0.5 * G2(T[3])])
        np.testing.assert_allclose(verts, expect, atol=1e-9)

    def test_joints_follow_chain(self, toy):
        theta = np.zeros(9)
        theta[3:6] = [0.0, 0.0, np.pi / 2]
        j = joints_3d(theta, np.zeros(1), toy, dtype=np.float64).data
        np.testing.assert_allclose(j, [[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1.5, 0]], atol=1e-12)

    def test_shape_direction_stretches(self, toy):
        verts = lbs_mesh(np.zeros(9), np.array([0.5]), toy, dtype=np.float64).data
        np.testing.assert_allclose(verts[:, 0], 1.5 * toy.template[:, 0])


class TestSyntheticAsset:
    def test_counts(self, asset):
        assert (asset.n_vertices, asset.faces.shape[0]) == (778, 1538)
        assert asset.n_joints == 16
        assert asset.theta_dim == 25

    def test_weight_rows_sum_to_one(self, asset):
        np.testing.assert_allclose(asset.skinning.sum(1), 1.0, atol=1e-6)
        np.testing.assert_allclose(asset.joint_regressor.sum(1), 1.0, atol=1e-6)

    def test_rest_mesh_is_template(self, asset):
        mesh = lbs_mesh(np.zeros(25), np.zeros(10), asset, dtype=np.float64).data
        np.testing.assert_array_equal(mesh, asset.template.astype(np.float64))

    def test_zero_theta_identity_rotations(self, asset):
        R = pose_to_rotations(np.zeros(25), asset, dtype=np.float64).data
        np.testing.assert_array_equal(R, np.broadcast_to(np.eye(3), (16, 3, 3)))

    def test_global_pi_about_z(self, asset):
        theta = np.zeros(25)
        theta[2] = np.pi
        R = pose_to_rotations(theta, asset, dtype=np.float64).data
        np.testing.assert_allclose(R[0], np.diag([-1.0, -1.0, 1.0]), atol=1e-15)
        np.testing.assert_array_equal(R[1:], np.broadcast_to(np.eye(3), (15, 3, 3)))

    def test_random_rotations_orthonormal(self, asset, rng):
        R = pose_to_rotations(rng.normal(size=(5, 25)), asset, dtype=np.float64).data
        np.testing.assert_allclose(R @ R.swapaxes(-1, -2), np.broadcast_to(np.eye(3), R.shape), atol=1e-9)
        np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-9)

    def test_global_rotation_is_rigid_about_root(self, asset):
        theta = np.zeros(25)
        theta[:3] = [0.3, -0.7, 1.1]
        mesh = lbs_mesh(theta, np.zeros(10), asset, dtype=np.float64).data
        T = asset.template.astype(np.float64)
        root = asset.joint_regressor[0].astype(np.float64) @ T
        expect = root + (T - root) @ _rot(theta[:3]).T
        np.testing.assert_allclose(mesh, expect, atol=1e-12)

    def test_rest_joints(self, asset, rng):
        beta = rng.normal(size=10)
        j = joints_3d(np.zeros(25), beta, asset, dtype=np.float64).data
        shaped = asset.template + asset.shape_basis @ beta
        articulated = asset.joint_regressor @ shaped
        full = np.concatenate([articulated, shaped[asset.fingertips]])
        np.testing.assert_allclose(j, full[asset.output_order], atol=1e-12)
        assert j.shape == (21, 3)

    def test_tips_from_mesh_match_fast_path(self, asset, rng):
        theta, beta = rng.normal(size=25) * 0.5, rng.normal(size=10)
        mesh = lbs_mesh(theta, beta, asset, dtype=np.float64)
        a = joints_3d(theta, beta, asset, mesh=mesh, dtype=np.float64).data
        b = joints_3d(theta, beta, asset, dtype=np.float64).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_float32_close_to_float64(self, asset, rng):
        theta, beta = rng.normal(size=(3, 25)) * 0.5, rng.normal(size=(3, 10))
        a = joints_3d(theta, beta, asset, dtype=np.float32).data
        b = joints_3d(theta, beta, asset, dtype=np.float64).data
        assert a.dtype == np.float32
        np.testing.assert_allclose(a, b, atol=1e-5)


class TestProjection:
    def test_identity_drops_z(self, rng):
        j = rng.normal(size=(21, 3))
        out = project_weak_perspective(Tensor(j), Tensor(np.eye(3)), Tensor(np.zeros(2)), Tensor(np.array(1.0)))
        np.testing.assert_array_equal(out.data, j[:, :2])

    def test_scale_then_offset(self, rng):
        j = rng.normal(size=(21, 3))
        out = project_weak_perspective(Tensor(j), Tensor(np.eye(3)), Tensor(np.array([10.0, -5.0])),
                                       Tensor(np.array(2.0))).data
        np.testing.assert_array_equal(out, 2.0 * j[:, :2] + np.array([10.0, -5.0]))

    def test_random_case_elementwise(self, rng):
        j = rng.normal(size=(4, 21, 3))
        R = np.stack([_rot(a) for a in rng.normal(size=(4, 3))])
        off, s = rng.normal(size=(4, 2)), rng.random(4) + 0.5
        out = project_weak_perspective(Tensor(j), Tensor(R), Tensor(off), Tensor(s)).data
        for b in range(4):
            for n in range(21):
                for i in range(2):
                    v = s[b] * sum(R[b, i, m] * j[b, n, m] for m in range(3)) + off[b, i]
                    assert out[b, n, i] == pytest.approx(v, abs=1e-12)


class TestLatentHead:
    def test_zero_weights_decode_to_zero_latent(self, asset, rng):
        head = LatentHead(8, asset, rng, np.float64)
        head.linear.weight.data[:] = 0
        head.linear.bias.data[:] = 0
        lat = head(Tensor(rng.normal(size=(3, 8))))
        assert head.width == 41
        np.testing.assert_array_equal(lat.theta.data, 0)
        np.testing.assert_array_equal(lat.beta.data, 0)
        np.testing.assert_array_equal(lat.cam_offset.data, 0)
        np.testing.assert_allclose(lat.cam_scale.data, np.log(2.0))

    def test_decoder_starts_at_rest_camera(self, asset, rng):
        dec = HandDecoder(8, asset, rng, np.float64, gain=0.0)
        _, j2, _ = dec(Tensor(np.zeros((1, 2, 8))))
        rest = joints_3d(np.zeros(25), np.zeros(10), asset, dtype=np.float64).data
        offset, scale = rest_camera(asset)
        np.testing.assert_allclose(j2.data[0, 0], scale * rest[:, :2] + offset, atol=1e-9)
        xy = j2.data[0, 0]
        np.testing.assert_allclose(0.5 * (xy.max(0) + xy.min(0)), [128.0, 128.0], atol=1e-9)

    def test_decode_gradients(self, asset, rng):
        dec = HandDecoder(6, asset, rng, np.float64)
        feats = Tensor(rng.normal(size=(1, 4, 6)))
        target = rng.normal(size=(1, 4, 21, 2)) * 30 + 128
        params = dict(dec.named_parameters())
        fn = lambda: ((dec(feats, mirror=np.arange(4) < 2)[1] - target) ** 2).sum()  # noqa: E731
        _, g = value_and_grad(fn, params)
        assert max(check_directions(fn, params, g, 5, rng)) < 1e-6


class TestMirror:
    def test_reflection_is_involution(self, asset, rng):
        j = Tensor(rng.normal(size=(2, 21, 3)))
        plane = mirror_plane(asset)
        twice = mirror_joints(mirror_joints(j, True, plane), True, plane)
        np.testing.assert_allclose(twice.data, j.data, atol=1e-12)

    def test_only_flagged_tokens_reflected(self, asset, rng):
        j = Tensor(rng.normal(size=(2, 21, 3)))
        out = mirror_joints(j, np.array([True, False]), 0.5).data
        np.testing.assert_array_equal(out[1], j.data[1])
        np.testing.assert_allclose(out[0, :, 0], 1.0 - j.data[0, :, 0])
        np.testing.assert_array_equal(out[0, :, 1:], j.data[0, :, 1:])

    def test_decode_latent_mirror(self, asset, rng):
        head = LatentHead(4, asset, rng, np.float64)
        lat = head(Tensor(rng.normal(size=(2, 4)) * 0.1))
        _, a = decode_latent(lat, asset)
        _, b = decode_latent(lat, asset, mirror=np.array([True, False]))
        np.testing.assert_array_equal(a.data[1], b.data[1])
        assert not np.allclose(a.data[0], b.data[0])


class TestAssetIO:
    def test_round_trip(self, asset, tmp_path):
        save_asset(asset, tmp_path / "hand.hma")
        back = load_asset(tmp_path / "hand.hma")
        for name in asset.ARRAYS:
            np.testing.assert_array_equal(getattr(back, name), getattr(asset, name))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_asset(tmp_path / "nope.hma")

    def test_invalid_weights_reported(self, toy):
        bad = dataclasses.replace(toy, skinning=toy.skinning * 2.0)
        with pytest.raises(AssetError, match="skinning rows must sum to 1"):
            bad.validate()

    def test_invalid_parents_reported(self, toy):
        bad = dataclasses.replace(toy, parents=np.array([-1, 2, 0], dtype=np.int32))
        with pytest.raises(AssetError, match="parents"):
            bad.validate()
