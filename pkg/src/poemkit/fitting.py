"""Iterative-optimization baseline: fit the toy hand to per-view 2D keypoints.

Decision variables are 16 axis-angle joint rotations, 10 shape coefficients,
and the world root translation; the objective is masked 2D reprojection MSE
plus a quadratic hinge on joint limits, minimized with Adam and plateau-decay
of the step size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .hand import (N_JOINTS, NODE_JOINTS, NODE_PARENTS, ROOT_JOINT, TIP_JOINTS,
                   TIP_NODES, ToyHandModel)
from .tensor import (ParamStore, Tape, Tensor, adam_step, as_tensor, backward,
                     concat, cos, gather, relu, reshape, sin, sqrt, square,
                     swapaxes, tsum)

_EX = np.array([[1.0], [0.0], [0.0]])
_EY = np.array([[0.0], [1.0], [0.0]])
_EZ = np.array([[0.0], [0.0], [1.0]])


class FittingError(Exception):
    pass


def axis_angle_to_matrix(omega):
    """Rodrigues map for a batch of axis-angle vectors (J, 3) -> (J, 3, 3).

    Exactly the identity at omega == 0 (guarded small-angle form).
    """
    omega = as_tensor(omega)
    wx, wy, wz = omega @ _EX, omega @ _EY, omega @ _EZ  # (J, 1) each
    a2 = square(wx) + square(wy) + square(wz)
    a = sqrt(a2 + 1e-24)
    c = cos(a)
    sa = sin(a) / a          # sinc
    B = (1.0 - c) / (a2 + 1e-24)
    r00 = c + B * wx * wx
    r01 = B * wx * wy - sa * wz
    r02 = B * wx * wz + sa * wy
    r10 = B * wx * wy + sa * wz
    r11 = c + B * wy * wy
    r12 = B * wy * wz - sa * wx
    r20 = B * wx * wz - sa * wy
    r21 = B * wy * wz + sa * wx
    r22 = c + B * wz * wz
    flat = concat([r00, r01, r02, r10, r11, r12, r20, r21, r22], axis=1)
    return reshape(flat, (-1, 3, 3))


def lbs_forward(model: ToyHandModel, theta, beta, root):
    """Pose the toy hand: shape blend, forward kinematics, skinning.

    Returns (V (n, 3), J (21, 3)) as Tensors, re-centered so that the middle
    MCP joint equals `root` exactly.  Fully differentiable in theta (16, 3),
    beta (10,), and root (3,); the rest pose reproduces the template bit-for-bit.
    """
    theta, beta, root = as_tensor(theta), as_tensor(beta), as_tensor(root)
    n = model.n_vertices

    # shape blend on vertices and rest joints
    bvec = reshape(beta, (1, 10))
    v_shaped = Tensor(model.template.vertices) + reshape(
        bvec @ model.shape_basis.reshape(10, -1), (n, 3))
    j_shaped = Tensor(model.template.joints) + reshape(
        bvec @ model.shape_basis_joints.reshape(10, -1), (N_JOINTS, 3))

    R = axis_angle_to_matrix(theta)  # (16, 3, 3)
    node_rest = gather(j_shaped, NODE_JOINTS)           # (16, 3)
    node_rest_col = reshape(node_rest, (16, 3, 1))

    # FK as affine skinning transforms x -> Rg[k] x + b[k]; b[k] is exactly
    # zero in the rest pose by construction (difference-of-rotations form)
    Rg, b = [None] * 16, [None] * 16
    for k in range(16):
        Rk = reshape(gather(R, [k]), (3, 3))
        jk = reshape(gather(node_rest, [k]), (3, 1))
        p = NODE_PARENTS[k]
        if p < 0:
            Rg[k] = Rk
            b[k] = jk - Rg[k] @ jk
        else:
            Rg[k] = Rg[p] @ Rk
            b[k] = (Rg[p] - Rg[k]) @ jk + b[p]
    Rg_all = concat([reshape(m, (1, 3, 3)) for m in Rg], axis=0)   # (16, 3, 3)
    b_all = concat([reshape(swapaxes(t, 0, 1), (1, 1, 3)) for t in b], axis=0)  # (16, 1, 3)

    # skinned vertices via blended displacements (exact at rest)
    v_row = reshape(v_shaped, (1, n, 3))
    posed_all = v_row @ swapaxes(Rg_all, 1, 2) + b_all              # (16, n, 3)
    disp = posed_all - v_row
    wts = model.skinning_weights.T[:, :, None]                      # (16, n, 1) constants
    v_posed = v_shaped + reshape(tsum(disp * wts, axis=0), (n, 3))

    # joints: kinematic nodes move rigidly with their own transform, tips with
    # their DIP node; then restore the original 21-joint order
    node_posed = reshape(Rg_all @ node_rest_col + swapaxes(b_all, 1, 2), (16, 3))
    tips_rest = reshape(gather(j_shaped, TIP_JOINTS), (5, 3, 1))
    Rg_tip = gather(Rg_all, TIP_NODES)
    b_tip = gather(b_all, TIP_NODES)
    tip_posed = reshape(Rg_tip @ tips_rest + swapaxes(b_tip, 1, 2), (5, 3))
    stacked = concat([node_posed, tip_posed], axis=0)               # node order then tips
    order = np.argsort(NODE_JOINTS + TIP_JOINTS)
    j_posed = gather(stacked, order)

    # re-center at the middle MCP and place at root
    mcp = gather(j_posed, [ROOT_JOINT])
    root_row = reshape(root, (1, 3))
    V = v_posed - mcp + root_row
    J = j_posed - mcp + root_row
    return V, J


def project_joints(J, rig, view_indices=None):
    """Differentiable pinhole projection of J (21, 3) into each rig view.

    Returns (pixels Tensor (V, 21, 2), depth values ndarray (V, 21)).
    """
    J = as_tensor(J)
    idx = range(len(rig)) if view_indices is None else view_indices
    cams = [rig[i] for i in idx]
    Rs = np.stack([c.pose.R for c in cams])                  # (V, 3, 3)
    ts = np.stack([c.pose.t for c in cams])[:, None, :]      # (V, 1, 3)
    J_row = reshape(J, (1, N_JOINTS, 3))
    cam_pts = J_row @ np.swapaxes(Rs, 1, 2) + ts             # (V, 21, 3)
    x, y, z = cam_pts @ _EX, cam_pts @ _EY, cam_pts @ _EZ    # (V, 21, 1)
    fx = np.array([c.intrinsics.fx for c in cams])[:, None, None]
    fy = np.array([c.intrinsics.fy for c in cams])[:, None, None]
    cx = np.array([c.intrinsics.cx for c in cams])[:, None, None]
    cy = np.array([c.intrinsics.cy for c in cams])[:, None, None]
    ok = (z.data > 1e-6).astype(np.float64)
    denom = z * ok + (1.0 - ok)   # behind-camera points divide by 1; masked downstream
    u = fx * (x / denom) + cx
    v = fy * (y / denom) + cy
    return concat([u, v], axis=2), z.data[:, :, 0]


def loss_2d(theta, beta, root, keypoints, rig, model):
    """Masked reprojection MSE in px^2: mean over valid (view, joint) pairs of
    the squared pixel distance.  keypoints: (V, 21, 3) rows [u, v, valid]."""
    kp = np.asarray(keypoints, dtype=np.float64)
    if kp.ndim != 3 or kp.shape[1:] != (N_JOINTS, 3):
        raise FittingError(f"keypoints must be (n_views, 21, 3), got {kp.shape}")
    _, J = lbs_forward(model, theta, beta, root)
    pix, depth = project_joints(J, rig)
    valid = (kp[:, :, 2] > 0.5) & (depth > 1e-6)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise FittingError("no valid (view, joint) observation")
    diff = pix - kp[:, :, :2]
    masked = diff * valid[:, :, None].astype(np.float64)
    return tsum(square(masked)) / float(n_valid)


def loss_kin(theta, model: ToyHandModel):
    """Sum of squared hinge violations of the per-joint axis-angle limits."""
    theta = as_tensor(theta)
    over = relu(theta - model.joint_limits_hi)
    under = relu(model.joint_limits_lo - theta)
    return tsum(square(over)) + tsum(square(under))


@dataclass
class FitOptions:
    n_iters: int = 300
    lr: float = 1e-2
    betas: tuple = (0.9, 0.999)
    lambda_kin: float = 0.1
    plateau_window: int = 50
    plateau_tol: float = 1e-8
    lr_decay: float = 0.5
    fixed_root: np.ndarray | None = None  # allows single-view fitting


@dataclass
class FitResult:
    theta: np.ndarray
    beta: np.ndarray
    root: np.ndarray
    loss_trace: list = field(default_factory=list)
    converged: bool = False

    def to_dict(self):
        return {"theta": self.theta.tolist(), "beta": self.beta.tolist(),
                "root": self.root.tolist(), "loss_trace": self.loss_trace,
                "converged": self.converged}


def init_root_dlt(keypoints, rig, joint=ROOT_JOINT):
    obs = []
    kp = np.asarray(keypoints, dtype=np.float64)
    for v in range(kp.shape[0]):
        if kp[v, joint, 2] > 0.5:
            obs.append((kp[v, joint, :2], rig[v]))
    return geometry.triangulate_dlt(obs)


def fit(keypoints, rig, model: ToyHandModel, opts: FitOptions | None = None) -> FitResult:
    """Recover (theta, beta, root) from multi-view 2D keypoints.

    Root is initialized by DLT on the root-joint keypoint (or opts.fixed_root
    for single-view inputs); theta and beta start at zero.
    """
    opts = opts or FitOptions()
    kp = np.asarray(keypoints, dtype=np.float64)
    if opts.fixed_root is not None:
        root0 = np.asarray(opts.fixed_root, dtype=np.float64)
    else:
        root0 = init_root_dlt(kp, rig)

    store = ParamStore(seed=0)
    theta = store.zeros("theta", (16, 3))
    beta = store.zeros("beta", (10,))
    root = store.add("root", root0)

    trace = []
    best = np.inf
    best_iter = 0
    lr = opts.lr
    for it in range(opts.n_iters):
        store.zero_grad()
        with Tape():
            loss = loss_2d(theta, beta, root, kp, rig, model) \
                + opts.lambda_kin * loss_kin(theta, model)
            backward(loss)
        val = loss.item()
        trace.append(val)
        if val < best - opts.plateau_tol:
            best = val
            best_iter = it
        elif it - best_iter >= opts.plateau_window:
            lr *= opts.lr_decay
            best_iter = it
        adam_step(store, lr=lr, betas=opts.betas)

    converged = bool(trace and trace[-1] <= trace[0])
    return FitResult(theta=theta.data.copy(), beta=beta.data.copy(),
                     root=root.data.copy(), loss_trace=trace, converged=converged)


def save_keypoints(keypoints, path):
    kp = np.asarray(keypoints, dtype=np.float64)
    views = [{"camera_index": i, "keypoints": kp[i].tolist()} for i in range(kp.shape[0])]
    with open(path, "w") as f:
        json.dump({"views": views}, f)


def load_keypoints(path):
    with open(path) as f:
        d = json.load(f)
    views = sorted(d["views"], key=lambda v: v["camera_index"])
    return np.array([v["keypoints"] for v in views], dtype=np.float64)
