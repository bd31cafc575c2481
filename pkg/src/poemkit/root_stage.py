"""Stage 1: per-view heatmap -> soft-argmax -> multi-view DLT root.

Grid-to-pixel convention (documented once, used everywhere): grid cell
(i, j) at stride s covers pixel center ((j + 0.5) * s - 0.5,
(i + 0.5) * s - 0.5); pixel (u, v) lands at grid coordinates
((u + 0.5) / s - 0.5, (v + 0.5) / s - 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .tensor import Tensor, concat, reshape, tsum

DEFAULT_STRIDE = 8


class EmptyHeatmapError(ValueError):
    """Heatmap has no positive mass, so no expectation exists."""


@dataclass
class Heatmap:
    grid: np.ndarray  # (H/s, W/s) nonnegative
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        arr = self.grid.data if isinstance(self.grid, Tensor) else self.grid
        if np.any(np.asarray(arr) < 0):
            raise ValueError("heatmap entries must be nonnegative")


@dataclass
class FeatureGrid:
    grid: np.ndarray  # (H/s, W/s, C)
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("feature grid must be finite")

    @property
    def channels(self):
        return self.grid.shape[2]


def grid_to_pixel(g, stride):
    return (np.asarray(g, dtype=np.float64) + 0.5) * stride - 0.5


def pixel_to_grid(p, stride):
    return (np.asarray(p, dtype=np.float64) + 0.5) / stride - 0.5


def normalize_heatmap(hm: Heatmap) -> Heatmap:
    total = hm.grid.sum()
    if total <= 0:
        raise EmptyHeatmapError("cannot normalize an all-zero heatmap")
    return Heatmap(hm.grid / total, hm.stride)


def soft_argmax(heatmap, stride=None):
    """Heatmap expectation in full-image pixels: (u, v).

    Accepts a Heatmap (returns an ndarray (2,)) or a Tensor grid plus stride
    (returns a Tensor (2,), differentiable w.r.t. the grid).
    """
    if isinstance(heatmap, Heatmap):
        grid, stride = heatmap.grid, heatmap.stride
    else:
        grid = heatmap
        if stride is None:
            raise ValueError("stride required when passing a bare grid")
    tensor_in = isinstance(grid, Tensor)
    g = grid if tensor_in else Tensor(np.asarray(grid, dtype=np.float64))
    h, w = g.data.shape
    total = tsum(g)
    if total.data <= 0:
        raise EmptyHeatmapError("soft-argmax of an all-zero heatmap")
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    u = tsum(g * jj) / total
    v = tsum(g * ii) / total
    u_pix = (u + 0.5) * stride - 0.5
    v_pix = (v + 0.5) * stride - 0.5
    out = concat([reshape(u_pix, (1,)), reshape(v_pix, (1,))])
    return out if tensor_in else out.data


def estimate_root(heatmaps, rig):
    """Per-view soft-argmax then DLT; raises on <2 views via triangulate_dlt."""
    if len(heatmaps) != len(rig):
        raise ValueError(f"{len(heatmaps)} heatmaps for {len(rig)} cameras")
    obs = [(soft_argmax(hm), rig[i]) for i, hm in enumerate(heatmaps)]
    return geometry.triangulate_dlt(obs)


def _channel_weights(n_points, channels):
    """Per-point feature signatures keyed by point identity (index) hash."""
    w = np.empty((n_points, channels))
    for i in range(n_points):
        rng = np.random.Generator(np.random.PCG64(0x9E3779B9 ^ (i * 0x85EBCA6B + 7)))
        v = rng.normal(size=channels)
        w[i] = v / np.linalg.norm(v)
    return w


def synth_backbone(scene, camera, model, channels, stride=DEFAULT_STRIDE,
                   heat_sigma=1.5, feat_sigma=2.0):
    """Deterministic stand-in for a learned image backbone.

    Splats the scene's hand points into `channels` feature channels with
    Gaussian kernels (per-point signature from an identity hash) and renders
    the root heatmap as a Gaussian blob at the true root projection.
    Occlusion-free; a root outside the view yields an all-zero heatmap.
    """
    from .synth import scene_points  # deferred: synth composes this module

    pts, root = scene_points(scene, model)
    W, H = camera.image_size
    hg, wg = H // stride, W // stride
    jj, ii = np.meshgrid(np.arange(wg, dtype=np.float64), np.arange(hg, dtype=np.float64))

    pix, _, in_front = geometry.project(pts, camera)
    gx = pixel_to_grid(pix[:, 0], stride)
    gy = pixel_to_grid(pix[:, 1], stride)
    visible = in_front & (pix[:, 0] >= 0) & (pix[:, 0] <= W - 1) \
        & (pix[:, 1] >= 0) & (pix[:, 1] <= H - 1)

    grid = np.zeros((hg, wg, channels))
    if visible.any():
        kern = np.exp(-((jj[None] - gx[visible, None, None]) ** 2
                        + (ii[None] - gy[visible, None, None]) ** 2) / (2 * feat_sigma ** 2))
        weights = _channel_weights(len(pts), channels)[visible]
        grid = np.ascontiguousarray(np.tensordot(kern, weights, axes=([0], [0])))

    heat = np.zeros((hg, wg))
    rpix, _, rfront = geometry.project(root[None], camera)
    if rfront[0] and 0 <= rpix[0, 0] <= W - 1 and 0 <= rpix[0, 1] <= H - 1:
        rx, ry = pixel_to_grid(rpix[0, 0], stride), pixel_to_grid(rpix[0, 1], stride)
        heat = np.exp(-((jj - rx) ** 2 + (ii - ry) ** 2) / (2 * heat_sigma ** 2))

    return FeatureGrid(grid, stride), Heatmap(heat, stride)


def write_pgm(hm: Heatmap, path):
    """Dump a heatmap as an ASCII PGM image for inspection."""
    g = np.asarray(hm.grid, dtype=np.float64)
    peak = g.max()
    img = np.zeros_like(g, dtype=np.int64) if peak <= 0 else np.round(g / peak * 255).astype(np.int64)
    h, w = img.shape
    with open(path, "w") as f:
        f.write(f"P2\n{w} {h}\n255\n")
        for row in img:
            f.write(" ".join(str(int(x)) for x in row) + "\n")
