"""Procedural toy articulated hand.

Stands in for a licensed statistical hand model: a fixed template (vertices,
21 joints, faces), a 16-node kinematic skeleton, 10 zero-mean shape blend
directions, per-vertex skinning weights, and coarse per-joint angle limits.

Joint order (21): 0 wrist; then MCP, PIP, DIP, TIP per finger in the order
thumb, index, middle, ring, pinky.  The middle-finger MCP (joint 9) sits at
the origin and is the model's root joint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

N_JOINTS = 21
N_NODES = 16  # kinematic nodes: wrist + (MCP, PIP, DIP) x 5
ROOT_JOINT = 9

# indices into the 21-joint array for the 16 kinematic nodes, parents within
# the node list, and the 5 fingertip joints with their driving DIP node
NODE_JOINTS = [0, 1, 2, 3, 5, 6, 7, 9, 10, 11, 13, 14, 15, 17, 18, 19]
NODE_PARENTS = [-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 0, 10, 11, 0, 13, 14]
TIP_JOINTS = [4, 8, 12, 16, 20]
TIP_NODES = [3, 6, 9, 12, 15]

# parent of each of the 21 joints (wrist is the tree root)
JOINT_PARENTS = [-1,
                 0, 1, 2, 3,
                 0, 5, 6, 7,
                 0, 9, 10, 11,
                 0, 13, 14, 15,
                 0, 17, 18, 19]

_WRIST = np.array([0.0, -0.072, 0.0])

# per finger: MCP position, pointing direction, segment lengths (MCP->PIP->DIP->TIP)
_FINGERS = [
    ("thumb", [-0.038, -0.044, 0.008], [-0.75, 0.62, 0.20], [0.027, 0.022, 0.018]),
    ("index", [-0.019, -0.002, 0.000], [-0.10, 1.00, 0.00], [0.032, 0.021, 0.017]),
    ("middle", [0.000, 0.000, 0.000], [0.00, 1.00, 0.00], [0.035, 0.023, 0.018]),
    ("ring", [0.018, -0.003, 0.000], [0.10, 1.00, 0.00], [0.032, 0.021, 0.017]),
    ("pinky", [0.034, -0.008, 0.000], [0.22, 1.00, 0.00], [0.025, 0.016, 0.013]),
]


@dataclass(frozen=True)
class HandTemplate:
    vertices: np.ndarray   # (n_vertices, 3)
    joints: np.ndarray     # (21, 3), joints[9] == origin
    faces: np.ndarray      # (F, 3) int
    skeleton: np.ndarray   # (21,) parent joint indices
    root_index: int = ROOT_JOINT


@dataclass(frozen=True)
class ToyHandModel:
    template: HandTemplate
    shape_basis: np.ndarray          # (10, n_vertices, 3), zero-mean directions
    shape_basis_joints: np.ndarray   # (10, 21, 3), same smooth field at the joints
    skinning_weights: np.ndarray     # (n_vertices, 16), rows sum to 1
    joint_limits_lo: np.ndarray      # (16, 3) axis-angle lower bounds
    joint_limits_hi: np.ndarray      # (16, 3)

    @property
    def n_vertices(self):
        return self.template.vertices.shape[0]

    @property
    def n_points(self):
        """Query point count: vertices then 21 joints."""
        return self.n_vertices + N_JOINTS


def _template_joints():
    joints = np.zeros((N_JOINTS, 3))
    joints[0] = _WRIST
    for f, (_, mcp, d, lens) in enumerate(_FINGERS):
        mcp = np.asarray(mcp, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        d = d / np.linalg.norm(d)
        base = 1 + 4 * f
        joints[base] = mcp
        joints[base + 1] = mcp + lens[0] * d
        joints[base + 2] = joints[base + 1] + lens[1] * d
        joints[base + 3] = joints[base + 2] + lens[2] * d
    return joints + 0.0  # normalize any -0.0


def _finger_vertices(joints, finger, count):
    """Points along one finger chain with symmetric radial offsets."""
    if count == 0:
        return np.zeros((0, 3))
    base = 1 + 4 * finger
    chain = joints[base:base + 4]
    seg_len = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    total = seg_len.sum()
    d = (chain[-1] - chain[0]) / np.linalg.norm(chain[-1] - chain[0])
    lateral = np.cross(d, [0.0, 0.0, 1.0])
    lateral /= np.linalg.norm(lateral)
    n_station = (count + 1) // 2
    pts = []
    for si, s in enumerate(np.linspace(0.06, 0.97, n_station) * total):
        # locate arclength s on the polyline
        acc = 0.0
        for k in range(3):
            if s <= acc + seg_len[k] or k == 2:
                t = (s - acc) / seg_len[k]
                p = chain[k] + t * (chain[k + 1] - chain[k])
                break
            acc += seg_len[k]
        r = 0.007 - 0.003 * (s / total)
        normal = np.array([0.0, 0.0, 1.0]) if si % 2 == 0 else lateral
        pts.append(p + r * normal)
        if len(pts) < count:
            pts.append(p - r * normal)
    return np.array(pts[:count])


def _palm_vertices(joints, count):
    top_l = joints[5] + np.array([-0.008, -0.004, 0.0])   # index MCP side
    top_r = joints[17] + np.array([0.007, -0.002, 0.0])   # pinky MCP side
    bot_l = _WRIST + np.array([-0.020, 0.0, 0.0])
    bot_r = _WRIST + np.array([0.020, 0.0, 0.0])
    cols = int(np.ceil(np.sqrt(count * 1.4)))
    rows = int(np.ceil(count / cols))
    pts = []
    for i in range(rows):
        b = i / max(rows - 1, 1)
        for j in range(cols):
            a = j / max(cols - 1, 1)
            top = (1 - a) * top_l + a * top_r
            bot = (1 - a) * bot_l + a * bot_r
            p = (1 - b) * bot + b * top
            p = p + np.array([0.0, 0.0, 0.006 if (i + j) % 2 == 0 else -0.006])
            pts.append(p)
    return np.array(pts[:count]), rows, cols


def _faces(n_palm, palm_rows, palm_cols, per_finger, n_vertices):
    faces = []
    for i in range(palm_rows - 1):
        for j in range(palm_cols - 1):
            a = i * palm_cols + j
            b, c, d = a + 1, a + palm_cols, a + palm_cols + 1
            if d < n_palm:
                faces.append([a, b, c])
                faces.append([b, d, c])
    for f in range(5):
        base = n_palm + f * per_finger
        for k in range(per_finger - 2):
            faces.append([base + k, base + k + 1, base + k + 2])
    faces = [f for f in faces if max(f) < n_vertices]
    return np.array(faces, dtype=np.int64).reshape(-1, 3)


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t * ab))


def _skinning_weights(vertices, joints):
    """Gaussian falloff to each node's bone segment, top-3, renormalized."""
    n = len(vertices)
    w = np.zeros((n, N_NODES))
    sigma = 0.005
    for vi, v in enumerate(vertices):
        d = np.zeros(N_NODES)
        # wrist node: closest of the five wrist->MCP metacarpal segments
        d[0] = min(_point_segment_distance(v, joints[0], joints[1 + 4 * f]) for f in range(5))
        for f in range(5):
            base = 1 + 4 * f
            for seg in range(3):
                node = 1 + 3 * f + seg
                d[node] = _point_segment_distance(v, joints[base + seg], joints[base + seg + 1])
        scores = np.exp(-(d / sigma) ** 2)
        top = np.argsort(-scores)[:3]
        row = np.zeros(N_NODES)
        row[top] = scores[top]
        if row.sum() < 1e-300:
            row[np.argmin(d)] = 1.0
        w[vi] = row / row.sum()
    return w


def _shape_fields(points):
    """10 smooth displacement fields evaluated at `points` (m, 3)."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    yp = np.maximum(y, 0.0)
    zero = np.zeros_like(x)
    fields = [
        0.020 * points,                                            # global scale
        0.015 * np.stack([zero, yp, zero], axis=1),                # finger length
        0.020 * np.stack([x, zero, zero], axis=1),                 # palm width
        0.030 * np.stack([zero, zero, z], axis=1),                 # thickness
        0.150 * np.stack([x * y, zero, zero], axis=1),             # taper
        0.150 * np.stack([zero, zero, y * yp], axis=1),            # curl
        0.200 * np.stack([x * yp, zero, zero], axis=1),            # splay
        0.020 * np.stack([zero, np.minimum(y, 0.0), zero], axis=1),  # palm length
        0.004 * np.stack([zero, np.sin(40.0 * x), zero], axis=1),  # ripple
        0.030 * np.stack([zero, zero, y], axis=1),                 # shear
    ]
    return np.stack(fields, axis=0)


@lru_cache(maxsize=8)
def build_hand_model(n_vertices: int = 77) -> ToyHandModel:
    """Deterministic toy hand; pass 778 for full-scale point-count parity.

    Small counts (down to 2) degrade gracefully to palm-only point sets for
    miniature test configurations.
    """
    if n_vertices < 2:
        raise ValueError("need at least 2 vertices")
    joints = _template_joints()
    n_palm = max(2, int(round(n_vertices * 0.35)))
    per_finger = max((n_vertices - n_palm) // 5, 0)
    n_palm = n_vertices - 5 * per_finger
    palm, rows, cols = _palm_vertices(joints, n_palm)
    verts = [palm]
    for f in range(5):
        verts.append(_finger_vertices(joints, f, per_finger))
    vertices = np.concatenate(verts, axis=0) + 0.0
    assert vertices.shape == (n_vertices, 3)

    faces = _faces(n_palm, rows, cols, per_finger, n_vertices)
    weights = _skinning_weights(vertices, joints)

    sv = _shape_fields(vertices)
    sj = _shape_fields(joints)
    mean = sv.mean(axis=1, keepdims=True)  # zero-mean over vertices; same offset at joints
    sv = sv - mean
    sj = sj - mean

    lo = np.tile(np.array([-0.2, -0.4, -0.4]), (N_NODES, 1))
    hi = np.tile(np.array([1.8, 0.4, 0.4]), (N_NODES, 1))
    lo[0] = -np.pi  # wrist orientation is free
    hi[0] = np.pi

    tmpl = HandTemplate(vertices=_rof(vertices), joints=_rof(joints), faces=_rof(faces),
                        skeleton=_rof(np.array(JOINT_PARENTS)))
    return ToyHandModel(template=tmpl, shape_basis=_rof(sv), shape_basis_joints=_rof(sj),
                        skinning_weights=_rof(weights), joint_limits_lo=_rof(lo), joint_limits_hi=_rof(hi))


def _rof(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def template_points(model: ToyHandModel) -> np.ndarray:
    """Template query points: vertices stacked before joints, (Q, 3)."""
    return np.concatenate([model.template.vertices, model.template.joints], axis=0)
