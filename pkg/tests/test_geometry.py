"""Reprojection, warping, sampling and gradient-operator checks."""

import numpy as np
import pytest

from mvskit.geometry import (
    Camera,
    DepthMap,
    bilinear_sample,
    camera_from_file,
    camera_to_file,
    depth_to_flow,
    image_gradient,
    image_gradient_adjoint,
    project_depth_map,
    project_points,
    reproject_point,
    warp_field,
)
from tests.conftest import finite_difference, gradient_scene, smooth_image


def simple_camera(t=(0.0, 0.0, 0.0), r=None, f=100.0, c=50.0, depth_range=(0.5, 10.0)):
    k = np.array([[f, 0, c], [0, f, c], [0, 0, 1.0]])
    return Camera(k, np.eye(3) if r is None else r, np.asarray(t, dtype=float), depth_range)


class TestCameraValidation:
    def test_rejects_non_orthonormal_rotation(self):
        with pytest.raises(ValueError, match="orthonormal"):
            simple_camera(r=np.eye(3) * 1.01)

    def test_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError, match="determinant"):
            simple_camera(r=r)

    def test_rejects_lower_triangle(self):
        k = np.array([[100, 0, 50], [5, 100, 50], [0, 0, 1.0]])
        with pytest.raises(ValueError, match="upper-triangular"):
            Camera(k, np.eye(3), np.zeros(3), (1, 2))

    def test_camera_file_round_trip(self):
        cam = simple_camera(t=(0.25, -0.5, 0.125))
        again = camera_from_file(camera_to_file(cam, 64))
        assert np.allclose(again.K, cam.K)
        assert np.allclose(again.R, cam.R)
        assert np.allclose(again.t, cam.t)
        assert again.depth_range == pytest.approx(cam.depth_range)


class TestReprojectPoint:
    def test_identical_cameras_identity(self):
        cam = simple_camera()
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = rng.uniform(0, 100, 2)
            d = rng.uniform(0.5, 8.0)
            phat, dhat, valid = reproject_point(p, d, cam, cam)
            assert valid
            assert np.allclose(phat, p, atol=1e-9)
            assert dhat == pytest.approx(d, abs=1e-12)

    def test_translated_rig_hand_oracle(self):
        # hand-derived: ray through image center at depth 1 hits world (0,0,1);
        # in the source frame that point is (-0.5, 0, 1) and projects to (0, 50)
        ref = simple_camera()
        src = simple_camera(t=(-0.5, 0.0, 0.0))
        phat, dhat, valid = reproject_point(np.array([50.0, 50.0]), 1.0, ref, src)
        assert valid
        assert np.allclose(phat, [0.0, 50.0], atol=1e-12)
        assert dhat == pytest.approx(1.0)

    def test_disparity_halves_with_depth(self):
        ref = simple_camera()
        src = simple_camera(t=(-0.5, 0.0, 0.0))
        phat, dhat, _ = reproject_point(np.array([50.0, 50.0]), 2.0, ref, src)
        assert np.allclose(phat, [25.0, 50.0], atol=1e-12)
        assert dhat == pytest.approx(2.0)

    def test_matrix_arithmetic_oracle(self):
        # independent path: assemble the full homogeneous relative transform
        rng = np.random.default_rng(7)
        for _ in range(25):
            angle = rng.normal(0, 0.1)
            r = np.array(
                [
                    [np.cos(angle), -np.sin(angle), 0],
                    [np.sin(angle), np.cos(angle), 0],
                    [0, 0, 1.0],
                ]
            )
            ref = simple_camera(t=rng.normal(0, 0.2, 3))
            src = simple_camera(t=rng.normal(0, 0.2, 3), r=r)
            p = rng.uniform(10, 90, 2)
            d = rng.uniform(1.0, 5.0)
            t_ref = np.eye(4)
            t_ref[:3, :3], t_ref[:3, 3] = ref.R, ref.t
            t_src = np.eye(4)
            t_src[:3, :3], t_src[:3, 3] = src.R, src.t
            x_world = np.linalg.inv(t_ref) @ np.append(
                np.linalg.inv(ref.K) @ np.array([p[0], p[1], 1.0]) * d, 1.0
            )
            q = src.K @ (t_src @ x_world)[:3]
            phat, dhat, valid = reproject_point(p, d, ref, src)
            assert valid
            assert np.allclose(phat, q[:2] / q[2], atol=1e-9)
            assert dhat == pytest.approx(q[2], rel=1e-12)

    def test_rejects_nonpositive_depth(self):
        cam = simple_camera()
        with pytest.raises(ValueError, match="positive"):
            reproject_point(np.array([1.0, 1.0]), 0.0, cam, cam)

    def test_behind_source_flagged_invalid(self):
        ref = simple_camera()
        src = simple_camera(t=(0.0, 0.0, -5.0))
        _, dhat, valid = reproject_point(np.array([50.0, 50.0]), 1.0, ref, src)
        assert not valid and dhat <= 0


class TestWarpField:
    def test_identical_cameras_identity_grid(self):
        cam = simple_camera(f=16.0, c=7.5)
        rng = np.random.default_rng(1)
        vals = 2.0 + rng.random((16, 16))
        vals[3, 4] = -1.0  # invalid entry
        depth = DepthMap(np.abs(vals), vals > 0)
        coords, mask = warp_field(depth, cam, cam)
        ys, xs = np.mgrid[0:16, 0:16]
        assert np.allclose(coords[mask][:, 0], xs[mask], atol=1e-9)
        assert np.allclose(coords[mask][:, 1], ys[mask], atol=1e-9)
        assert np.array_equal(mask, depth.valid)

    def test_flow_is_coords_minus_grid(self):
        cam_ref, sources, depth, _ = gradient_scene(3)
        cam_src = sources[0][1]
        coords, mask = warp_field(depth, cam_ref, cam_src)
        flow, fmask, _ = depth_to_flow(depth, cam_ref, cam_src)
        ys, xs = np.mgrid[0 : depth.shape[0], 0 : depth.shape[1]].astype(float)
        grid = np.stack([xs, ys], axis=-1)
        assert np.array_equal(mask, fmask)
        assert np.array_equal(coords - grid, flow)

    def test_out_of_bounds_masked(self):
        ref = simple_camera(f=16.0, c=7.5)
        src = simple_camera(t=(-8.0, 0.0, 0.0), f=16.0, c=7.5)
        depth = DepthMap.from_array(np.full((16, 16), 1.0))
        coords, mask = warp_field(depth, ref, src)
        assert not mask.any()
        assert (coords[..., 0] < 0.0).all()  # pushed off the left edge

    def test_round_trip_through_induced_depth(self):
        cam_ref, sources, depth, _ = gradient_scene(11)
        h, w = depth.shape
        ys, xs = np.mgrid[0:h, 0:w].astype(float)
        for _, cam_src in sources:
            grid = project_depth_map(depth, cam_ref, cam_src)
            u2, v2, _, front = project_points(
                grid.u[grid.mask], grid.v[grid.mask], grid.src_depth[grid.mask], cam_src, cam_ref
            )
            assert front.all()
            err = np.hypot(u2 - xs[grid.mask], v2 - ys[grid.mask])
            assert err.max() < 1e-6

    def test_projective_scale_invariance(self):
        cam_ref, sources, depth, _ = gradient_scene(17)
        cam_src = sources[0][1]
        factor = 3.7
        ref2 = Camera(cam_ref.K, cam_ref.R, cam_ref.t * factor,
                      (cam_ref.depth_range[0] * factor, cam_ref.depth_range[1] * factor))
        src2 = Camera(cam_src.K, cam_src.R, cam_src.t * factor,
                      (cam_src.depth_range[0] * factor, cam_src.depth_range[1] * factor))
        depth2 = DepthMap(depth.values * factor, depth.valid)
        f1, m1, _ = depth_to_flow(depth, cam_ref, cam_src)
        f2, m2, _ = depth_to_flow(depth2, ref2, src2)
        assert np.array_equal(m1, m2)
        assert np.allclose(f1[m1], f2[m2], atol=1e-9)


class TestDepthToFlow:
    def test_identical_cameras_zero_flow(self):
        cam = simple_camera(f=12.0, c=5.5)
        depth = DepthMap.from_array(np.full((12, 12), 2.5))
        flow, mask, _ = depth_to_flow(depth, cam, cam)
        assert mask.all()
        assert np.allclose(flow, 0.0, atol=1e-9)

    def test_translated_rig_flow_value(self):
        ref = simple_camera()
        src = simple_camera(t=(-0.5, 0.0, 0.0))
        depth = DepthMap.from_array(np.full((101, 101), 1.0))
        flow, mask, _ = depth_to_flow(depth, ref, src)
        assert mask[50, 50]
        assert np.allclose(flow[50, 50], [-50.0, 0.0], atol=1e-9)

    def test_jacobian_matches_finite_differences(self):
        for seed in (0, 1, 2):
            cam_ref, sources, depth, _ = gradient_scene(seed)
            for _, cam_src in sources:
                _, _, jac = depth_to_flow(depth, cam_ref, cam_src)
                for comp in range(2):
                    def total(vals, comp=comp, cam_src=cam_src):
                        f, _, _ = depth_to_flow(
                            DepthMap.from_array(vals), cam_ref, cam_src
                        )
                        return float(f[..., comp].sum())

                    fd = finite_difference(total, depth.values)
                    rel = np.linalg.norm(jac[..., comp] - fd) / np.linalg.norm(fd)
                    assert rel < 1e-5


class TestBilinearSample:
    def test_integer_coords_exact_and_forward_difference_jacobian(self):
        rng = np.random.default_rng(5)
        img = rng.random((9, 9))
        ys, xs = np.mgrid[1:8, 1:8].astype(float)
        coords = np.stack([xs, ys], axis=-1)
        out = bilinear_sample(img, coords)
        assert np.array_equal(out.values, img[1:8, 1:8])
        assert out.inbounds.all()
        fwd_x = img[1:8, 2:9] - img[1:8, 1:8]
        fwd_y = img[2:9, 1:8] - img[1:8, 1:8]
        assert np.allclose(out.ddx, fwd_x)
        assert np.allclose(out.ddy, fwd_y)

    def test_midpoint_average(self):
        img = np.array([[0.0, 1.0]])
        out = bilinear_sample(img, np.array([[0.5, 0.0]]))
        assert out.values[0] == pytest.approx(0.5)

    def test_jacobian_vs_central_differences(self):
        rng = np.random.default_rng(6)
        img = smooth_image(rng, 16, 16, channels=0)
        coords = np.stack(
            [rng.uniform(1.2, 14.3, 200), rng.uniform(1.2, 14.3, 200)], axis=-1
        )
        # keep probes away from the interpolation lattice
        coords = np.where(np.abs(coords - np.round(coords)) < 0.02, coords + 0.05, coords)
        out = bilinear_sample(img, coords)
        h = 1e-4
        for axis in range(2):
            step = np.zeros(2)
            step[axis] = h
            hi = bilinear_sample(img, coords + step).values
            lo = bilinear_sample(img, coords - step).values
            fd = (hi - lo) / (2 * h)
            ana = out.ddx if axis == 0 else out.ddy
            rel = np.linalg.norm(ana - fd) / np.linalg.norm(fd)
            assert rel < 1e-5

    def test_out_of_bounds_clamped_and_flagged(self):
        img = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = bilinear_sample(img, np.array([[-3.0, 0.0], [5.0, 1.0], [0.5, 0.5]]))
        assert out.inbounds.tolist() == [False, False, True]
        assert out.values[0] == 1.0 and out.values[1] == 4.0

    def test_multichannel(self):
        rng = np.random.default_rng(8)
        img = rng.random((5, 5, 3))
        out = bilinear_sample(img, np.array([[2.0, 3.0]]))
        assert np.allclose(out.values[0], img[3, 2])

    def test_rejects_non_finite_coords(self):
        with pytest.raises(ValueError, match="finite"):
            bilinear_sample(np.ones((3, 3)), np.array([[np.nan, 0.0]]))


class TestImageGradient:
    def test_constant_zero(self):
        gx, gy = image_gradient(np.full((5, 7), 3.25))
        assert not gx.any() and not gy.any()

    def test_horizontal_ramp(self):
        w = 8
        img = np.tile(np.arange(w, dtype=float) / w, (5, 1))
        gx, gy = image_gradient(img)
        assert np.allclose(gx[:, :-1], 1.0 / w)
        assert not gx[:, -1].any()
        assert not gy.any()

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(9)
        img = rng.random((10, 10))
        gx, _ = image_gradient(img.T)
        _, gy = image_gradient(img)
        assert np.allclose(gx, gy.T, atol=1e-12)

    def test_degenerate_size_rejected(self):
        with pytest.raises(ValueError, match="2x2"):
            image_gradient(np.ones((1, 5)))

    def test_adjoint_identity(self):
        # <grad(img), (gx, gy)> == <img, adjoint(gx, gy)> for random tensors
        rng = np.random.default_rng(10)
        img = rng.random((6, 7))
        dgx = rng.random((6, 7))
        dgy = rng.random((6, 7))
        gx, gy = image_gradient(img)
        lhs = np.sum(gx * dgx + gy * dgy)
        rhs = np.sum(img * image_gradient_adjoint(dgx, dgy))
        assert lhs == pytest.approx(rhs, rel=1e-12)
