"""Basis point cloud: generation, placement, projective feature sampling,
and cross-view aggregation.

The basis points are a fixed Gaussian-in-sphere sample; once placed at the
estimated root they are projected into every view, features are bilinearly
sampled and tagged with a 2D sine positional encoding, and the per-view
features are fused point-wise by a bottleneck non-local update around the
first (primary) view.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import geometry, hooks
from .root_stage import pixel_to_grid
from .tensor import Tensor, as_tensor, bilinear_sample, tsum


@dataclass(frozen=True)
class BasisPointSet:
    points: np.ndarray  # (M, 3) meters, fixed once generated
    seed: int
    diameter: float

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class PlacedBasis:
    rel: np.ndarray    # (M, 3) root-relative (the generated cloud, verbatim)
    root: np.ndarray   # (3,)
    world: np.ndarray = None  # (M, 3), rel + root

    def __post_init__(self):
        object.__setattr__(self, "world", self.rel + self.root)


def generate_bps(m_pts, diameter, seed) -> BasisPointSet:
    """Isotropic Gaussian (sigma = diameter/6) rejected to strictly inside the
    sphere; bit-identical for a given seed."""
    if m_pts < 1 or diameter <= 0:
        raise ValueError("need m_pts >= 1 and diameter > 0")
    sigma = diameter / 6.0
    radius = diameter / 2.0
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    n = 0
    while n < m_pts:
        batch = rng.normal(scale=sigma, size=(max(1024, m_pts), 3))
        keep = batch[np.linalg.norm(batch, axis=1) < radius]
        out.append(keep)
        n += len(keep)
    pts = np.concatenate(out, axis=0)[:m_pts]
    return BasisPointSet(points=pts, seed=int(seed), diameter=float(diameter))


def place_basis(bps: BasisPointSet, root) -> PlacedBasis:
    return PlacedBasis(rel=bps.points, root=np.asarray(root, dtype=np.float64))


def export_bps_csv(bps: BasisPointSet, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "z"])
        for p in bps.points:
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])


def sine_pe(pixels, image_size, d, temperature=10000.0):
    """DETR-style 2D sine positional encoding of pixel coordinates.

    Coordinates are normalized to [0, 2*pi) by the image extent; the first
    d/2 channels encode v, the last d/2 encode u, each as interleaved
    sin/cos over a geometric frequency ladder.
    """
    if d % 4 != 0:
        raise ValueError(f"PE dimension must be divisible by 4, got {d}")
    p = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    W, H = image_size
    num = d // 2
    dim_t = temperature ** (2 * (np.arange(num) // 2) / num)
    out = np.empty((len(p), d))
    for axis, extent, offset in ((1, H, 0), (0, W, num)):
        pos = (p[:, axis] * (2 * np.pi / extent))[:, None] / dim_t
        out[:, offset:offset + num:2] = np.sin(pos[:, 0::2])
        out[:, offset + 1:offset + num:2] = np.cos(pos[:, 1::2])
    return out


def sample_projected_features(placed: PlacedBasis, rig, feature_grids):
    """Per-view projected features f_i (M, d) plus in-view masks (N, M).

    Each basis point is projected into view i, the feature grid is bilinearly
    sampled at the projection, and the sine PE of the pixel position is added.
    Points behind the camera or outside the grid get a zero row and a cleared
    mask bit.
    """
    if len(rig) != len(feature_grids):
        raise ValueError(f"{len(feature_grids)} feature grids for {len(rig)} cameras")
    m = len(placed.rel)
    feats = []
    masks = np.zeros((len(rig), m), dtype=bool)
    for i, (cam, fg) in enumerate(zip(rig.cameras, feature_grids)):
        d = fg.channels
        pix, _, in_front = geometry.project(placed.world, cam)
        safe_pix = np.where(in_front[:, None], pix, -1e12)
        coords = pixel_to_grid(safe_pix, fg.stride)
        grid_t = fg.grid if isinstance(fg.grid, Tensor) else Tensor(fg.grid)
        vals, out_of_view = bilinear_sample(grid_t, Tensor(coords))
        in_view = ~out_of_view
        masks[i] = in_view
        pe = sine_pe(safe_pix, cam.image_size, d)
        pe[~in_view] = 0.0
        feats.append(vals + pe)
    return feats, masks


def projective_aggregation(features, masks, theta_w, phi_w):
    """Fuse per-view basis features into one (M, d) feature set.

    Single view: the projected features pass through untouched.  Multiple
    views: the first view is the target; every other view's feature is
    down-projected, dot-product weighted against the target, summed
    (out-of-view sources excluded), up-projected, scaled by 1/N, and added
    onto the target.
    """
    n = len(features)
    if n < 1:
        raise ValueError("aggregation needs at least one view")
    if n == 1:
        return features[0]
    theta_w, phi_w = as_tensor(theta_w), as_tensor(phi_w)
    d = features[0].data.shape[1]
    if theta_w.data.shape[0] != d or phi_w.data.shape[1] != d:
        raise ValueError(f"projection weights {theta_w.data.shape}/{phi_w.data.shape} "
                         f"do not match feature dim {d}")
    target = features[0] @ theta_w
    update = None
    for j in range(1, n):
        src = features[j] @ theta_w
        if not masks[j].all():
            src = src * masks[j][:, None].astype(np.float64)
        w = tsum(target * src, axis=1, keepdims=True)
        term = w * src
        update = term if update is None else update + term
    fused = (update @ phi_w) * (1.0 / n)
    base = -features[0] if hooks.on(hooks.AGG_TARGET_SIGN_FLIP) else features[0]
    return base + fused
