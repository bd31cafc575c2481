"""Synthetic multi-view data: scenes, spherical rigs, rendered frame bundles,
view-count/order randomization, and the on-disk dataset format.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import geometry
from .fitting import lbs_forward
from .geometry import Camera, CameraIntrinsics, CameraPose, Rig
from .hand import ROOT_JOINT, ToyHandModel
from .root_stage import FeatureGrid, Heatmap, synth_backbone


@dataclass
class Scene:
    theta: np.ndarray          # (16, 3) axis-angle
    beta: np.ndarray           # (10,)
    root: np.ndarray           # (3,) world position of the middle MCP
    handedness: str = "right"
    seed: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(16, 3)
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(10)
        self.root = np.asarray(self.root, dtype=np.float64).reshape(3)
        if self.handedness not in ("left", "right"):
            raise ValueError(f"handedness must be left or right, got {self.handedness!r}")


@dataclass
class FrameBundle:
    rig: Rig
    feature_grids: list            # per view FeatureGrid
    heatmaps: list                 # per view Heatmap
    gt_x: np.ndarray               # (Q, 3) vertices then joints
    gt_root: np.ndarray            # (3,)
    scene: Scene | None = None
    frame_id: str = ""

    @property
    def n_views(self):
        return len(self.rig)


def scene_points(scene: Scene, model: ToyHandModel):
    """Ground-truth query points (Q, 3) and root for a scene.

    A left hand is the world mirror of the right-hand twin whose root is the
    mirrored root, so scene.root is the true root either way.
    """
    if scene.handedness == "left":
        v, j = lbs_forward(model, scene.theta, scene.beta, geometry.mirror_points(scene.root))
        pts = geometry.mirror_points(np.concatenate([v.data, j.data], axis=0))
    else:
        v, j = lbs_forward(model, scene.theta, scene.beta, scene.root)
        pts = np.concatenate([v.data, j.data], axis=0)
    return pts, pts[model.n_vertices + ROOT_JOINT]


def _look_at(center, target, up):
    z = target - center
    z = z / np.linalg.norm(z)
    if abs(np.dot(z, up)) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])  # world -> camera rows
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = -R @ center
    return T


def _orthonormalize(T):
    U, _, Vt = np.linalg.svd(T[:3, :3])
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    out = np.eye(4)
    out[:3, :3] = R
    out[:3, 3] = T[:3, 3]
    return out


def make_rig(n_cameras, radius, seed, image_size=(256, 256), focal=300.0) -> Rig:
    """Cameras on a jittered sphere looking at its center, re-anchored so that
    camera 0 is the world frame (its pose is the identity)."""
    if n_cameras < 1:
        raise ValueError("need at least one camera")
    rng = np.random.Generator(np.random.PCG64(seed))
    W, H = image_size
    K = CameraIntrinsics.from_params(focal, focal, (W - 1) / 2.0, (H - 1) / 2.0)
    up = np.array([0.0, 0.0, 1.0])
    poses = []
    for i in range(n_cameras):
        az = 2 * np.pi * i / n_cameras + rng.uniform(-0.3, 0.3) * 2 * np.pi / n_cameras
        el = rng.uniform(-0.5, 0.8)
        c = radius * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        poses.append(_look_at(c, np.zeros(3), up))
    anchor_inv = np.linalg.inv(poses[0])
    cams = [Camera(K, CameraPose(np.eye(4) if i == 0 else _orthonormalize(T @ anchor_inv)),
                   image_size) for i, T in enumerate(poses)]
    return Rig(cams)


def rig_focus(rig: Rig, default_depth=0.6):
    """Least-squares intersection of the cameras' optical axes."""
    if len(rig) == 1:
        c = rig[0].pose.center
        axis = rig[0].pose.R.T @ np.array([0.0, 0.0, 1.0])
        return c + default_depth * axis
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for cam in rig.cameras:
        c = cam.pose.center
        d = cam.pose.R.T @ np.array([0.0, 0.0, 1.0])
        P = np.eye(3) - np.outer(d, d)
        A += P
        b += P @ c
    return np.linalg.solve(A, b)


def random_scene(rig: Rig, seed, handedness="right") -> Scene:
    """Random moderate hand configuration rooted near the rig focus."""
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = np.zeros((16, 3))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    theta[0] = axis * rng.uniform(0.0, 0.5)
    theta[1:, 0] = rng.uniform(-0.1, 0.9, size=15)   # flexion
    theta[1:, 1] = rng.uniform(-0.25, 0.25, size=15)
    theta[1:, 2] = rng.uniform(-0.25, 0.25, size=15)
    beta = rng.uniform(-0.8, 0.8, size=10)
    root = rig_focus(rig) + rng.uniform(-0.04, 0.04, size=3)
    return Scene(theta=theta, beta=beta, root=root, handedness=handedness, seed=int(seed))


def render_frame(scene: Scene, rig: Rig, model: ToyHandModel, channels,
                 stride=8, heat_sigma=1.5, feat_sigma=2.0, frame_id="") -> FrameBundle:
    grids, heats = [], []
    for cam in rig.cameras:
        fg, hm = synth_backbone(scene, cam, model, channels, stride=stride,
                                heat_sigma=heat_sigma, feat_sigma=feat_sigma)
        grids.append(fg)
        heats.append(hm)
    pts, root = scene_points(scene, model)
    return FrameBundle(rig=rig, feature_grids=grids, heatmaps=heats,
                       gt_x=pts, gt_root=root, scene=scene, frame_id=frame_id)


def reanchor(frame: FrameBundle, order) -> FrameBundle:
    """Keep views in `order` and re-express the world in the new first camera.

    Poses and ground truth transform together, so every kept view's 2D
    projections are unchanged.
    """
    order = list(order)
    if not order:
        raise ValueError("must keep at least one view")
    A = frame.rig[order[0]].pose.T
    if np.array_equal(A, np.eye(4)):
        # keeping the anchor first is an exact no-op on poses and points
        cams = [frame.rig[i] for i in order]
        gt_x, gt_root = frame.gt_x, frame.gt_root
    else:
        A_inv = np.linalg.inv(A)
        cams = []
        for pos, i in enumerate(order):
            cam = frame.rig[i]
            pose = np.eye(4) if pos == 0 else _orthonormalize(cam.pose.T @ A_inv)
            cams.append(Camera(cam.intrinsics, CameraPose(pose), cam.image_size))
        R, t = A[:3, :3], A[:3, 3]
        gt_x = frame.gt_x @ R.T + t
        gt_root = R @ frame.gt_root + t
    return FrameBundle(rig=Rig(cams),
                       feature_grids=[frame.feature_grids[i] for i in order],
                       heatmaps=[frame.heatmaps[i] for i in order],
                       gt_x=gt_x, gt_root=gt_root, scene=None, frame_id=frame.frame_id)


def randomize_views(frame: FrameBundle, seed) -> FrameBundle:
    """Drop to a uniform-random view count in [1, N] and shuffle the rest."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = frame.n_views
    keep = int(rng.integers(1, n + 1))
    order = rng.permutation(n)[:keep]
    return reanchor(frame, order)


def mirror_bundle(frame: FrameBundle) -> FrameBundle:
    """Mirror a frame across camera 0's Y-Z plane: poses conjugated, image
    grids column-flipped, ground truth x-negated.  An involution."""
    rig = geometry.mirror_rig(frame.rig)
    grids = [FeatureGrid(np.ascontiguousarray(fg.grid[:, ::-1, :]), fg.stride)
             for fg in frame.feature_grids]
    heats = [Heatmap(np.ascontiguousarray(hm.grid[:, ::-1]), hm.stride)
             for hm in frame.heatmaps]
    return FrameBundle(rig=rig, feature_grids=grids, heatmaps=heats,
                       gt_x=geometry.mirror_points(frame.gt_x),
                       gt_root=geometry.mirror_points(frame.gt_root),
                       scene=None, frame_id=frame.frame_id)


# ---------------------------------------------------------------------------
# on-disk dataset format
# ---------------------------------------------------------------------------

_GRID_MAGIC = b"PVGR"
_GRID_VERSION = 1


def _write_grid_bin(path, fg: FeatureGrid, hm: Heatmap):
    h, w, c = fg.grid.shape
    with open(path, "wb") as f:
        f.write(_GRID_MAGIC)
        f.write(struct.pack("<IIIII", _GRID_VERSION, fg.stride, h, w, c))
        f.write(np.ascontiguousarray(fg.grid, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(hm.grid, dtype="<f8").tobytes())


def _read_grid_bin(path):
    with open(path, "rb") as f:
        if f.read(4) != _GRID_MAGIC:
            raise ValueError(f"{path}: not a grid file")
        version, stride, h, w, c = struct.unpack("<IIIII", f.read(20))
        if version != _GRID_VERSION:
            raise ValueError(f"{path}: unsupported grid version {version}")
        grid = np.frombuffer(f.read(h * w * c * 8), dtype="<f8").reshape(h, w, c).copy()
        heat = np.frombuffer(f.read(h * w * 8), dtype="<f8").reshape(h, w).copy()
    return FeatureGrid(grid, stride), Heatmap(heat, stride)


def save_bundle(frame: FrameBundle, dirpath):
    dirpath.mkdir(parents=True, exist_ok=True)
    geometry.save_rig(frame.rig, dirpath / "rig.json")
    gt = {"gt_x": frame.gt_x.tolist(), "gt_root": frame.gt_root.tolist(),
          "frame_id": frame.frame_id}
    if frame.scene is not None:
        gt["scene"] = {"theta": frame.scene.theta.tolist(), "beta": frame.scene.beta.tolist(),
                       "root": frame.scene.root.tolist(), "handedness": frame.scene.handedness,
                       "seed": frame.scene.seed}
    with open(dirpath / "gt.json", "w") as f:
        json.dump(gt, f)
    for i, (fg, hm) in enumerate(zip(frame.feature_grids, frame.heatmaps)):
        _write_grid_bin(dirpath / f"grid_{i}.bin", fg, hm)


def load_bundle(dirpath) -> FrameBundle:
    rig = geometry.load_rig(dirpath / "rig.json")
    with open(dirpath / "gt.json") as f:
        gt = json.load(f)
    grids, heats = [], []
    for i in range(len(rig)):
        fg, hm = _read_grid_bin(dirpath / f"grid_{i}.bin")
        grids.append(fg)
        heats.append(hm)
    scene = None
    if "scene" in gt:
        s = gt["scene"]
        scene = Scene(theta=np.array(s["theta"]), beta=np.array(s["beta"]),
                      root=np.array(s["root"]), handedness=s["handedness"], seed=s["seed"])
    return FrameBundle(rig=rig, feature_grids=grids, heatmaps=heats,
                       gt_x=np.array(gt["gt_x"]), gt_root=np.array(gt["gt_root"]),
                       scene=scene, frame_id=gt.get("frame_id", dirpath.name))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
