"""Multi-view pinhole camera geometry.

Pure numpy functions: projection, DLT triangulation, Procrustes alignment,
rotation augmentation, and rig mirroring.  Units are meters (world) and
pixels (image); extrinsics map world -> camera.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np


class GeometryError(Exception):
    pass


class DegenerateGeometryError(GeometryError):
    """Triangulation or alignment is underdetermined for the given inputs."""


class PointAtInfinityError(DegenerateGeometryError):
    """DLT solution has a vanishing homogeneous component."""


class NearSingularWarning(UserWarning):
    pass


def _ro(a):
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    K: np.ndarray  # 3x3, zero skew

    def __post_init__(self):
        object.__setattr__(self, "K", _ro(self.K))
        if self.K.shape != (3, 3):
            raise GeometryError(f"K must be 3x3, got {self.K.shape}")
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise GeometryError("focal lengths must be positive")
        if not np.array_equal(self.K[2], [0.0, 0.0, 1.0]):
            raise GeometryError("last row of K must be [0, 0, 1]")

    @classmethod
    def from_params(cls, fx, fy, cx, cy):
        return cls(np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1]], dtype=np.float64))

    @property
    def fx(self):
        return self.K[0, 0]

    @property
    def fy(self):
        return self.K[1, 1]

    @property
    def cx(self):
        return self.K[0, 2]

    @property
    def cy(self):
        return self.K[1, 2]


@dataclass(frozen=True)
class CameraPose:
    T: np.ndarray  # 4x4 SE(3), world -> camera

    def __post_init__(self):
        object.__setattr__(self, "T", _ro(self.T))
        if self.T.shape != (4, 4):
            raise GeometryError(f"T must be 4x4, got {self.T.shape}")
        R = self.T[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or not np.isclose(np.linalg.det(R), 1.0, atol=1e-9):
            raise GeometryError("rotation block must be orthonormal with det +1")
        if not np.allclose(self.T[3], [0, 0, 0, 1], atol=0):
            raise GeometryError("last row of T must be [0, 0, 0, 1]")

    @classmethod
    def identity(cls):
        return cls(np.eye(4))

    @property
    def R(self):
        return self.T[:3, :3]

    @property
    def t(self):
        return self.T[:3, 3]

    def inverse(self):
        Ti = np.eye(4)
        Ti[:3, :3] = self.R.T
        Ti[:3, 3] = -self.R.T @ self.t
        return CameraPose(Ti)

    @property
    def center(self):
        """Camera center in world coordinates."""
        return -self.R.T @ self.t


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    pose: CameraPose
    image_size: tuple  # (W, H) pixels

    def __post_init__(self):
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        if np.linalg.matrix_rank(self.M) != 3:
            raise GeometryError("projection matrix K*T[0:3,:] must have rank 3")

    @property
    def M(self):
        """3x4 homogeneous projection matrix."""
        return self.intrinsics.K @ self.pose.T[:3, :]

    @property
    def width(self):
        return self.image_size[0]

    @property
    def height(self):
        return self.image_size[1]


@dataclass
class Rig:
    cameras: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise GeometryError("a rig needs at least one camera")

    def __len__(self):
        return len(self.cameras)

    def __getitem__(self, i):
        return self.cameras[i]

    def is_canonical(self, atol=1e-9):
        return np.allclose(self.cameras[0].pose.T, np.eye(4), atol=atol)


def project(points, camera):
    """World points (N, 3) -> (pixels (N, 2), depth (N,), in_front (N,) bool).

    Behind-camera points are flagged, not an error; their pixel values are the
    raw perspective divide (meaningless when z <= 0).
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cam = camera.pose.R @ P.T + camera.pose.t[:, None]  # (3, N)
    z = cam[2]
    in_front = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.intrinsics.fx * cam[0] / z + camera.intrinsics.cx
        v = camera.intrinsics.fy * cam[1] / z + camera.intrinsics.cy
    return np.stack([u, v], axis=1), z.copy(), in_front


def triangulate_dlt(observations):
    """Triangulate one world point from [(pixel (2,), Camera), ...].

    Stacks the two projection constraints per view into a 2Nx4 homogeneous
    system and returns the dehomogenized right singular vector of the
    smallest singular value.
    """
    if len(observations) < 2:
        raise DegenerateGeometryError(f"triangulation needs >=2 observations, got {len(observations)}")
    centers = np.array([cam.pose.center for _, cam in observations])
    if np.all(np.linalg.norm(centers - centers[0], axis=1) < 1e-12):
        raise DegenerateGeometryError("all observations share one camera center (no FoV disparity)")
    rows = []
    for pix, cam in observations:
        M = cam.M
        u, v = float(pix[0]), float(pix[1])
        rows.append(u * M[2] - M[0])
        rows.append(v * M[2] - M[1])
    A = np.array(rows)
    _, s, Vt = np.linalg.svd(A)
    if s[-2] > 0 and (s[-2] - s[-1]) / s[-2] < 1e-9:
        warnings.warn("two smallest singular values nearly equal; triangulation ill-conditioned",
                      NearSingularWarning)
    X = Vt[-1]
    if abs(X[3]) < 1e-12:
        raise PointAtInfinityError("triangulated point at infinity (parallel viewing rays?)")
    return X[:3] / X[3]


def procrustes_align(pred, gt):
    """Similarity transform minimizing ||s*R*pred + t - gt||^2 (reflection excluded).

    Returns (aligned_pred (N,3), s, R (3,3), t (3,)).
    """
    P = np.asarray(pred, dtype=np.float64)
    G = np.asarray(gt, dtype=np.float64)
    if P.shape != G.shape or P.ndim != 2 or P.shape[1] != 3 or P.shape[0] < 3:
        raise DegenerateGeometryError(f"need matching Nx3 arrays with N>=3, got {P.shape} and {G.shape}")
    mp, mg = P.mean(axis=0), G.mean(axis=0)
    X, Y = P - mp, G - mg
    var_p = (X * X).sum() / len(P)
    if var_p < 1e-24 or (Y * Y).sum() / len(G) < 1e-24:
        raise DegenerateGeometryError("degenerate point spread (zero variance)")
    cov = Y.T @ X / len(P)
    U, S, Vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.diag([1.0, 1.0, d])
    R = U @ D @ Vt
    s = np.trace(np.diag(S) @ D) / var_p
    t = mg - s * R @ mp
    aligned = (s * (R @ P.T)).T + t
    return aligned, s, R, t


def rot2(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotate_augment(camera, angle):
    """Image-rotation augmentation: returns (pixel_map (3,3), rotated camera).

    The camera pose is left-multiplied by a rotation of `angle` about the
    optical axis; pixel_map is the matching homogeneous 2D map about the
    principal point (a pure rotation when fx == fy) so that
    pixel_map(project(P, camera)) == project(P, camera') for all world P.
    """
    K = camera.intrinsics
    S = np.diag([K.fx, K.fy])
    A2 = S @ rot2(angle) @ np.linalg.inv(S)
    c = np.array([K.cx, K.cy])
    A = np.eye(3)
    A[:2, :2] = A2
    A[:2, 2] = c - A2 @ c
    Rot = np.eye(4)
    Rot[:3, :3] = np.array([[np.cos(angle), -np.sin(angle), 0],
                            [np.sin(angle), np.cos(angle), 0],
                            [0, 0, 1]])
    new_pose = CameraPose(Rot @ camera.pose.T)
    return A, Camera(camera.intrinsics, new_pose, camera.image_size)


def apply_pixel_map(A, pixels):
    p = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    return (A[:2, :2] @ p.T).T + A[:2, 2]


_MIRROR4 = np.diag([-1.0, 1.0, 1.0, 1.0])


def mirror_points(points):
    """Reflect world points across the anchor camera's Y-Z plane (negate x)."""
    p = np.asarray(points, dtype=np.float64).copy()
    p[..., 0] = -p[..., 0]
    return p


def mirror_camera(camera):
    T = _MIRROR4 @ camera.pose.T @ _MIRROR4
    K = camera.intrinsics
    Km = CameraIntrinsics.from_params(K.fx, K.fy, camera.width - 1 - K.cx, K.cy)
    return Camera(Km, CameraPose(T), camera.image_size)


def mirror_rig(rig):
    """Mirror all camera poses across camera 0's Y-Z plane; an involution.

    Horizontal image flips (u -> W-1-u) are folded into the mirrored
    principal point; image/grid contents must be column-flipped by the caller.
    """
    return Rig([mirror_camera(c) for c in rig.cameras])


def camera_to_dict(camera):
    return {
        "K": [float(x) for x in camera.intrinsics.K.reshape(-1)],
        "T": [float(x) for x in camera.pose.T.reshape(-1)],
        "width": camera.width,
        "height": camera.height,
    }


def camera_from_dict(d):
    K = np.array(d["K"], dtype=np.float64).reshape(3, 3)
    T = np.array(d["T"], dtype=np.float64).reshape(4, 4)
    return Camera(CameraIntrinsics(K), CameraPose(T), (d["width"], d["height"]))


def save_rig(rig, path):
    with open(path, "w") as f:
        json.dump({"cameras": [camera_to_dict(c) for c in rig.cameras]}, f, indent=1)


def load_rig(path):
    with open(path) as f:
        d = json.load(f)
    return Rig([camera_from_dict(c) for c in d["cameras"]])
