import numpy as np
import pytest

from poemkit import fitting as F
from poemkit import geometry as G
from poemkit import synth
from poemkit.hand import NODE_JOINTS
from poemkit.tensor import Tensor, gradcheck, square, tsum


def render_keypoints(model, scene, rig):
    _, J = F.lbs_forward(model, scene.theta, scene.beta, scene.root)
    out = []
    for cam in rig.cameras:
        pix, _, front = G.project(J.data, cam)
        out.append(np.concatenate([pix, front[:, None].astype(float)], axis=1))
    return np.stack(out), J.data


# ---------------------------------------------------------------------------
# LBS
# ---------------------------------------------------------------------------

def test_lbs_rest_pose_is_template_exactly(hand77):
    V, J = F.lbs_forward(hand77, np.zeros((16, 3)), np.zeros(10), np.zeros(3))
    assert np.array_equal(V.data, hand77.template.vertices)
    assert np.array_equal(J.data, hand77.template.joints)


def test_lbs_translation_equivariance(hand77, rng):
    theta = rng.normal(size=(16, 3)) * 0.3
    beta = rng.normal(size=10) * 0.5
    V0, J0 = F.lbs_forward(hand77, theta, beta, np.zeros(3))
    V1, J1 = F.lbs_forward(hand77, theta, beta, np.array([0.1, 0.0, 0.0]))
    assert np.abs(V1.data - V0.data - [0.1, 0, 0]).max() < 1e-12
    assert np.abs(J1.data - J0.data - [0.1, 0, 0]).max() < 1e-12


def test_lbs_root_lands_on_mcp(hand77, rng):
    theta = rng.normal(size=(16, 3)) * 0.4
    root = np.array([0.02, -0.03, 0.6])
    _, J = F.lbs_forward(hand77, theta, np.zeros(10), root)
    assert np.array_equal(J.data[9], root)


def test_lbs_single_joint_bend_rotates_child_chain_rigidly(hand77):
    # bend the index-finger PIP node (node 5) by 90 degrees about x
    theta = np.zeros((16, 3))
    node = 5
    theta[node, 0] = np.pi / 2
    _, J = F.lbs_forward(hand77, theta, np.zeros(10), np.zeros(3))
    tj = hand77.template.joints
    pivot_joint = NODE_JOINTS[node]            # index PIP (joint 6)
    # hand-rolled rigid transform: rotate about the pivot by 90 deg around x
    c, s = 0.0, 1.0
    R = np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    for j in (7, 8):                           # index DIP and TIP joints
        expect = R @ (tj[j] - tj[pivot_joint]) + tj[pivot_joint]
        assert np.abs(J.data[j] - expect).max() < 1e-12
    # joints outside the bent chain stay put
    for j in (0, 5, 9, 13, 17):
        assert np.abs(J.data[j] - tj[j]).max() < 1e-12


def test_lbs_wrist_rotation_is_globally_rigid(hand77):
    # rotating only the wrist node moves every vertex and joint rigidly
    # about the wrist (all skinning nodes share one global transform)
    angle = 0.8
    theta = np.zeros((16, 3))
    theta[0, 2] = angle
    V, J = F.lbs_forward(hand77, theta, np.zeros(10), np.zeros(3))
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    wrist = hand77.template.joints[0]

    def rigid(p):
        return (p - wrist) @ R.T + wrist

    # lbs re-centers at the MCP, so compare after removing that shift
    expect_j = rigid(hand77.template.joints)
    expect_v = rigid(hand77.template.vertices)
    shift = expect_j[9]
    assert np.abs(J.data - (expect_j - shift)).max() < 1e-9
    assert np.abs(V.data - (expect_v - shift)).max() < 1e-9


def test_lbs_gradcheck(hand77, rng):
    theta = Tensor(rng.normal(size=(16, 3)) * 0.2)
    beta = Tensor(rng.normal(size=10) * 0.3)
    root = Tensor(rng.normal(size=3) * 0.05)

    def f(theta, beta, root):
        V, J = F.lbs_forward(hand77, theta, beta, root)
        return tsum(square(V)) + tsum(square(J))

    assert gradcheck(f, [theta, beta, root]) <= 1e-4


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def test_loss_2d_zero_at_exact(hand77, rig4):
    scene = synth.random_scene(rig4, seed=5)
    kp, _ = render_keypoints(hand77, scene, rig4)
    loss = F.loss_2d(scene.theta, scene.beta, scene.root, kp, rig4, hand77)
    assert loss.item() < 1e-18


def test_loss_2d_single_offset_closed_form(hand77, rig4):
    scene = synth.random_scene(rig4, seed=6)
    kp, _ = render_keypoints(hand77, scene, rig4)
    kp2 = kp.copy()
    kp2[1, 4, 0] += 3.0
    kp2[1, 4, 1] += 4.0
    n_valid = int(kp[:, :, 2].sum())
    loss = F.loss_2d(scene.theta, scene.beta, scene.root, kp2, rig4, hand77)
    assert loss.item() == pytest.approx(25.0 / n_valid, rel=1e-12)


def test_loss_2d_requires_valid_observation(hand77, rig4):
    kp = np.zeros((4, 21, 3))
    with pytest.raises(F.FittingError, match="no valid"):
        F.loss_2d(np.zeros((16, 3)), np.zeros(10), np.zeros(3), kp, rig4, hand77)


def test_loss_2d_gradcheck_root(hand77, rig4, rng):
    scene = synth.random_scene(rig4, seed=7)
    kp, _ = render_keypoints(hand77, scene, rig4)
    kp[:, :, :2] += rng.normal(0, 2.0, size=kp[:, :, :2].shape)
    root = Tensor(scene.root.copy())
    err = gradcheck(lambda r: F.loss_2d(Tensor(scene.theta), Tensor(scene.beta),
                                        r, kp, rig4, hand77), [root])
    assert err <= 1e-4


def test_loss_kin_zero_inside(hand77):
    theta = np.zeros((16, 3))
    theta[3, 0] = 1.0  # inside [-0.2, 1.8]
    assert F.loss_kin(theta, hand77).item() == 0.0


def test_loss_kin_quadratic_hinge(hand77):
    theta = np.zeros((16, 3))
    theta[3, 0] = 1.9  # 0.1 beyond the 1.8 flexion bound
    assert F.loss_kin(theta, hand77).item() == pytest.approx(0.01, rel=1e-12)


def test_loss_kin_zero_gradient_strictly_inside(hand77):
    from poemkit.tensor import Tape, backward
    theta = Tensor(np.full((16, 3), 0.1), requires_grad=True)
    with Tape():
        loss = F.loss_kin(theta, hand77) + 0.0 * tsum(theta)
        backward(loss)
    assert np.array_equal(theta.grad, np.zeros((16, 3)))


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def test_fit_noiseless_recovery(hand77, rig4):
    scene = synth.random_scene(rig4, seed=8)
    kp, J_true = render_keypoints(hand77, scene, rig4)
    res = F.fit(kp, rig4, hand77)   # the 300-iteration default schedule
    _, J_fit = F.lbs_forward(hand77, res.theta, res.beta, res.root)
    err_mm = np.linalg.norm(J_fit.data - J_true, axis=1).mean() * 1000
    assert err_mm < 2.0
    assert res.loss_trace[-1] <= res.loss_trace[0]


def test_fit_converged_reprojection_under_half_pixel(hand77, rig4):
    # no iteration bound on this invariant: run the same schedule longer
    for seed in (9, 20):
        scene = synth.random_scene(rig4, seed=seed)
        kp, _ = render_keypoints(hand77, scene, rig4)
        res = F.fit(kp, rig4, hand77, F.FitOptions(n_iters=800))
        _, J_fit = F.lbs_forward(hand77, res.theta, res.beta, res.root)
        for v, cam in enumerate(rig4.cameras):
            pix, _, _ = G.project(J_fit.data, cam)
            assert np.abs(pix - kp[v, :, :2]).max() < 0.5


def test_fit_zero_iterations_is_initialization(hand77, rig4):
    scene = synth.random_scene(rig4, seed=9)
    kp, _ = render_keypoints(hand77, scene, rig4)
    res = F.fit(kp, rig4, hand77, F.FitOptions(n_iters=0))
    assert np.array_equal(res.theta, np.zeros((16, 3)))
    assert np.array_equal(res.beta, np.zeros(10))
    assert np.array_equal(res.root, F.init_root_dlt(kp, rig4))
    assert res.loss_trace == [] and not res.converged


def test_fit_single_view_needs_fixed_root(hand77):
    rig = synth.make_rig(1, 0.6, seed=10)
    scene = synth.random_scene(rig, seed=11)
    kp, _ = render_keypoints(hand77, scene, rig)
    with pytest.raises(G.DegenerateGeometryError):
        F.fit(kp, rig, hand77, F.FitOptions(n_iters=0))
    res = F.fit(kp, rig, hand77, F.FitOptions(n_iters=0, fixed_root=scene.root))
    assert np.array_equal(res.root, scene.root)


def test_keypoints_json_roundtrip(tmp_path, hand77, rig4):
    scene = synth.random_scene(rig4, seed=12)
    kp, _ = render_keypoints(hand77, scene, rig4)
    path = tmp_path / "kp.json"
    F.save_keypoints(kp, path)
    back = F.load_keypoints(path)
    assert np.array_equal(kp, back)
