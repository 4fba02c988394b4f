"""Shared fixtures: deterministic scenes and finite-difference helpers."""

from __future__ import annotations

import numpy as np
import pytest

from mvskit import synth
from mvskit.geometry import Camera, DepthMap, project_depth_map


def smooth_image(rng, h, w, channels=3):
    """Band-limited random image in [0.2, 0.8]; smooth enough for stable sampling."""
    shape = (h, w, channels) if channels else (h, w)
    img = rng.random(shape)
    for _ in range(3):
        img = 0.25 * (
            np.roll(img, 1, 0) + np.roll(img, -1, 0) + np.roll(img, 1, 1) + np.roll(img, -1, 1)
        )
    return 0.2 + 0.6 * img


def small_rotation(rng, scale=0.03):
    w = rng.normal(0.0, scale, 3)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return np.eye(3)
    k = w / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def gradient_scene(seed, size=8, n_sources=2):
    """Random multi-view rig whose warps stay interior and off the pixel lattice.

    Finite differences across a bilinear kink or a mask flip are
    meaningless, so rigs are redrawn (deterministically) until every
    warp lands inside the sources and away from integer coordinates.
    """
    k = np.array([[10.0, 0, (size - 1) / 2], [0, 10.0, (size - 1) / 2], [0, 0, 1.0]])
    cam_ref = Camera(k, np.eye(3), np.zeros(3), (1.0, 4.0))
    for attempt in range(64):
        rng = np.random.default_rng((seed, attempt))
        cams = [
            Camera(
                k,
                small_rotation(rng),
                rng.normal(0, 0.08, 3) * np.array([1, 1, 0.3]),
                (1.0, 4.0),
            )
            for _ in range(n_sources)
        ]
        depth_vals = 2.0 + rng.uniform(-0.2, 0.2, (size, size))
        for _ in range(40):
            dm = DepthMap.from_array(depth_vals)
            clean = True
            for cam in cams:
                grid = project_depth_map(dm, cam_ref, cam)
                # the sampling lattice (bounds included) is where FD breaks down
                off_u = np.abs(grid.u - np.round(grid.u))
                off_v = np.abs(grid.v - np.round(grid.v))
                if (off_u < 0.03).any() or (off_v < 0.03).any() or not grid.mask.any():
                    clean = False
                    break
            if clean:
                sources = [(smooth_image(rng, size, size), cam) for cam in cams]
                return cam_ref, sources, DepthMap.from_array(depth_vals), rng
            depth_vals = depth_vals + rng.uniform(0.001, 0.004, depth_vals.shape)
    pytest.fail(f"could not sanitize gradient scene for seed {seed}")


def finite_difference(fn, values, h_rel=1e-4):
    """Central differences per entry, step scaled to the value magnitude."""
    grad = np.zeros_like(values)
    for idx in np.ndindex(values.shape):
        h = h_rel * max(1.0, abs(values[idx]))
        hi = values.copy()
        hi[idx] += h
        lo = values.copy()
        lo[idx] -= h
        grad[idx] = (fn(hi) - fn(lo)) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    return float(np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric))


@pytest.fixture(scope="session")
def acceptance_scene_64():
    spec = synth.acceptance_scene(64, 64, 3)
    return spec, synth.render(spec)


@pytest.fixture(scope="session")
def acceptance_scene_128():
    spec = synth.acceptance_scene(128, 128, 3)
    return spec, synth.render(spec)


@pytest.fixture(scope="session")
def strip_scene_128():
    spec = synth.acceptance_scene(128, 128, 3, textureless_strip=True)
    return spec, synth.render(spec)


@pytest.fixture(scope="session")
def two_plane_scene_64():
    spec = synth.two_plane_scene(64, 64, 2)
    return spec, synth.render(spec)
