"""Plane sweep, softmin depth readout, ensembles and block matching."""

import numpy as np
import pytest

from mvskit import synth
from mvskit.geometry import Camera
from mvskit.matcher import (
    CostVolume,
    SamplerSpec,
    block_match_flow,
    build_cost_volume,
    hypothesis_depths,
    mc_sample,
    soft_argmin_depth,
)
from mvskit.synth import Plane, SceneSpec, Texture
from mvskit.uncertainty import ensemble_stats
from tests.conftest import smooth_image


def plane_rig(depth=2.0, hypotheses=9, size=24, baseline=0.2, depth_range=(1.0, 3.0)):
    k = np.array([[float(size), 0, (size - 1) / 2], [0, float(size), (size - 1) / 2], [0, 0, 1.0]])
    cams = [
        Camera(k, np.eye(3), np.array([-x, 0.0, 0.0]), depth_range)
        for x in (-baseline, 0.0, baseline)
    ]
    prim = Plane((0, 0, depth), (0, 0, -1.0), 8.0, 8.0, Texture("noise", scale=0.1, seed=5))
    spec = SceneSpec([prim], cams, size, size)
    renders = synth.render(spec)
    ref = renders[1]
    sources = [(renders[0].image, cams[0]), (renders[2].image, cams[2])]
    return ref, sources, cams[1]


class TestHypotheses:
    def test_uniform_spacing(self):
        d = hypothesis_depths((1.0, 3.0), 9)
        assert np.allclose(np.diff(d), 0.25)
        assert d[0] == 1.0 and d[-1] == 3.0

    def test_inverse_spacing(self):
        d = hypothesis_depths((1.0, 4.0), 7, inverse=True)
        assert d[0] == pytest.approx(1.0) and d[-1] == pytest.approx(4.0)
        assert np.allclose(np.diff(1.0 / d), np.diff(1.0 / d)[0])


class TestCostVolume:
    def test_true_hypothesis_wins_on_textured_plane(self):
        # plane depth coincides with hypothesis index 4 of [1, 3] / 9
        ref, sources, cam = plane_rig(depth=2.0, hypotheses=9)
        volume = build_cost_volume(ref.image, sources, cam, 9)
        assert volume.depths[4] == pytest.approx(2.0)
        best = np.argmin(volume.costs, axis=0)
        interior = best[6:-6, 6:-6]
        assert (interior == 4).mean() > 0.99

    def test_identical_cameras_zero_cost(self):
        rng = np.random.default_rng(0)
        k = np.array([[16.0, 0, 7.5], [0, 16.0, 7.5], [0, 0, 1.0]])
        cam = Camera(k, np.eye(3), np.zeros(3), (1.0, 3.0))
        img = smooth_image(rng, 16, 16)
        volume = build_cost_volume(img, [(img, cam)], cam, 5)
        assert np.allclose(volume.costs, 0.0, atol=1e-9)

    def test_source_permutation_invariance(self):
        ref, sources, cam = plane_rig()
        a = build_cost_volume(ref.image, sources, cam, 7)
        b = build_cost_volume(ref.image, sources[::-1], cam, 7)
        assert np.allclose(a.costs, b.costs, atol=1e-9)
        assert np.array_equal(a.counts, b.counts)

    def test_out_of_frustum_source_degenerate(self):
        rng = np.random.default_rng(1)
        k = np.array([[16.0, 0, 7.5], [0, 16.0, 7.5], [0, 0, 1.0]])
        cam_ref = Camera(k, np.eye(3), np.zeros(3), (1.0, 3.0))
        cam_far = Camera(k, np.eye(3), np.array([-50.0, 0, 0]), (1.0, 3.0))
        img = smooth_image(rng, 16, 16)
        volume = build_cost_volume(img, [(img, cam_far)], cam_ref, 5)
        assert volume.degenerate.all()
        # uniform (zero) standardized cost at unsupported pixels
        assert not volume.costs.any()

    def test_memory_budget_error_names_bytes(self):
        ref, sources, cam = plane_rig()
        with pytest.raises(MemoryError, match="bytes"):
            build_cost_volume(ref.image, sources, cam, 64, max_bytes=1000)


class TestSoftArgmin:
    def _volume(self, costs, depths):
        counts = np.full(costs.shape, 3, dtype=np.uint8)
        return CostVolume(costs, counts, depths)

    def test_delta_distribution(self):
        depths = np.linspace(1, 3, 9)
        costs = np.full((9, 4, 4), 1e6)
        costs[6] = 0.0
        dm, s2 = soft_argmin_depth(self._volume(costs, depths))
        assert np.allclose(dm.values, depths[6])
        assert np.allclose(s2, 0.0, atol=1e-12)

    def test_uniform_distribution(self):
        depths = np.linspace(1, 3, 9)
        costs = np.zeros((9, 5, 5))
        dm, s2 = soft_argmin_depth(self._volume(costs, depths))
        assert np.allclose(dm.values, depths.mean())
        assert np.allclose(s2, depths.var())

    def test_sigma_matches_reweighted_sum(self):
        rng = np.random.default_rng(2)
        depths = np.linspace(1, 3, 17)
        costs = rng.random((17, 6, 6)) * 4
        dm, s2 = soft_argmin_depth(self._volume(costs, depths), temperature=0.5)
        w = np.exp(-costs / 0.5)
        w /= w.sum(axis=0)
        mean = (w * depths[:, None, None]).sum(axis=0)
        var = (w * (depths[:, None, None] - mean) ** 2).sum(axis=0)
        assert np.allclose(dm.values, mean, atol=1e-12)
        assert np.abs(s2 - var).max() < 1e-8

    def test_output_within_depth_range(self):
        ref, sources, cam = plane_rig()
        volume = build_cost_volume(ref.image, sources, cam, 33)
        dm, _ = soft_argmin_depth(volume)
        assert dm.values[dm.valid].min() >= cam.depth_range[0]
        assert dm.values[dm.valid].max() <= cam.depth_range[1]

    def test_rmse_below_twice_spacing(self):
        ref, sources, cam = plane_rig(depth=2.13, hypotheses=65, size=48)
        volume = build_cost_volume(ref.image, sources, cam, 65)
        dm, _ = soft_argmin_depth(volume)
        spacing = np.diff(volume.depths)[0]
        interior = np.zeros(dm.shape, dtype=bool)
        interior[6:-6, 6:-6] = True
        err = dm.values[interior] - ref.depth.values[interior]
        assert np.sqrt(np.mean(err**2)) < 2 * spacing

    def test_temperature_must_be_positive(self):
        depths = np.linspace(1, 2, 4)
        with pytest.raises(ValueError, match="temperature"):
            soft_argmin_depth(self._volume(np.zeros((4, 2, 2)), depths), temperature=0.0)


class TestEnsembleSampling:
    def test_no_dropout_reproduces_deterministic_pipeline(self):
        ref, sources, cam = plane_rig()
        volume = build_cost_volume(ref.image, sources, cam, 17)
        dm, s2 = soft_argmin_depth(volume)
        stack = mc_sample(
            ref.image, sources, cam, 17, SamplerSpec(4, 0.0, 0), volume=volume
        )
        for t in range(4):
            assert np.array_equal(stack.depths[t], dm.values)
        mean, u = ensemble_stats(stack)
        assert np.allclose(u, s2, atol=1e-12)  # no spread, only the noise proxy

    def test_same_seed_bit_identical(self):
        ref, sources, cam = plane_rig()
        volume = build_cost_volume(ref.image, sources, cam, 17)
        a = mc_sample(ref.image, sources, cam, 17, SamplerSpec(5, 0.3, 42), volume=volume)
        b = mc_sample(ref.image, sources, cam, 17, SamplerSpec(5, 0.3, 42), volume=volume)
        assert np.array_equal(a.depths, b.depths)
        assert np.array_equal(a.sigma2, b.sigma2)

    def test_different_seed_differs(self):
        ref, sources, cam = plane_rig()
        volume = build_cost_volume(ref.image, sources, cam, 17)
        a = mc_sample(ref.image, sources, cam, 17, SamplerSpec(5, 0.3, 1), volume=volume)
        b = mc_sample(ref.image, sources, cam, 17, SamplerSpec(5, 0.3, 2), volume=volume)
        assert not np.array_equal(a.depths, b.depths)

    def test_textureless_region_more_uncertain(self, strip_scene_128):
        spec, renders = strip_scene_128
        sources = [(renders[j].image, spec.cameras[j]) for j in (0, 2)]
        stack = mc_sample(
            renders[1].image, sources, spec.cameras[1], 96, SamplerSpec(8, 0.2, 3)
        )
        _, u = ensemble_stats(stack)
        strip = renders[1].prim == 2
        textured = (renders[1].prim >= 0) & ~strip
        assert np.median(u[strip]) > np.median(u[textured])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SamplerSpec(samples=1)
        with pytest.raises(ValueError):
            SamplerSpec(drop_rate=1.0)


class TestBlockMatching:
    @staticmethod
    def _smooth(seed, h, w):
        rng = np.random.default_rng(seed)
        img = rng.random((h, w))
        for _ in range(2):
            img = 0.25 * (
                np.roll(img, 1, 0) + np.roll(img, -1, 0) + np.roll(img, 1, 1) + np.roll(img, -1, 1)
            )
        return img

    def test_identical_images_zero_flow(self):
        img = self._smooth(0, 48, 48)
        assert not block_match_flow(img, img).any()

    def test_constructed_integer_shift(self):
        big = self._smooth(1, 96, 96)
        a = big[16:80, 16:80].copy()
        b = big[16:80, 13:77].copy()  # b(p + (3,0)) == a(p)
        flow = block_match_flow(a, b, max_disp=4, levels=3)
        interior = flow[10:-10, 10:-10]
        assert (np.abs(interior[..., 0] - 3.0) < 0.01).mean() > 0.99
        assert np.abs(interior[..., 1]).max() < 0.01

    def test_swap_negates_interior(self):
        big = self._smooth(2, 96, 96)
        a = big[16:80, 16:80].copy()
        b = big[16:80, 14:78].copy()
        fwd = block_match_flow(a, b, max_disp=4, levels=2)
        bwd = block_match_flow(b, a, max_disp=4, levels=2)
        residual = np.abs(fwd + bwd)[10:-10, 10:-10]
        assert np.quantile(residual.max(axis=-1), 0.99) <= 0.5

    def test_pyramid_reaches_beyond_window(self):
        big = self._smooth(3, 192, 192)
        a = big[32:160, 32:160].copy()
        b = big[32:160, 26:154].copy()  # shift 6 > max_disp
        flow = block_match_flow(a, b, max_disp=4, levels=3)
        interior = flow[16:-16, 16:-16]
        assert (np.abs(interior[..., 0] - 6.0) < 0.01).mean() > 0.98

    def test_color_images_accepted(self):
        rng = np.random.default_rng(4)
        img = rng.random((48, 48, 3))
        assert not block_match_flow(img, img).any()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="share"):
            block_match_flow(np.zeros((8, 8)), np.zeros((9, 8)))
