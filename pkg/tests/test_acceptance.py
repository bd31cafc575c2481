"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
The trained models for the generalization and robustness criteria are shared
module-scoped fixtures (the slow part).
"""

import time

import numpy as np
import pytest

from poemkit import basis, decoder, fitting, geometry, metrics, root_stage, synth, training
from poemkit.decoder import ModelConfig
from poemkit.hand import build_hand_model, template_points
from poemkit.tensor import Tensor, gradcheck, square, tsum

TINY = ModelConfig(d=32, n_layers=2, k=8, n_heads=4, m_pts=256, q=98, seed=5)


def _report(name, detail):
    print(f"\n[PASS] {name}: {detail}")


# ---------------------------------------------------------------------------
# shared slow fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_hand():
    return build_hand_model(TINY.n_vertices)


@pytest.fixture(scope="module")
def fixed_rig():
    return synth.make_rig(4, 0.6, seed=3)


@pytest.fixture(scope="module")
def corpus(tiny_hand, fixed_rig):
    train = [synth.render_frame(synth.random_scene(fixed_rig, seed=1000 + i),
                                fixed_rig, tiny_hand, channels=TINY.d) for i in range(200)]
    test = [synth.render_frame(synth.random_scene(fixed_rig, seed=9000 + i),
                               fixed_rig, tiny_hand, channels=TINY.d) for i in range(50)]
    return train, test


@pytest.fixture(scope="module")
def model_randomized(corpus):
    train, _ = corpus
    params = decoder.build_params(TINY)
    training.train(TINY, params, train, steps=3000, lr=2e-3, seed=0, randomize=True)
    return params


@pytest.fixture(scope="module")
def model_fixed_order(corpus):
    train, _ = corpus
    params = decoder.build_params(TINY)
    training.train(TINY, params, train, steps=3000, lr=2e-3, seed=0, randomize=False)
    return params


# ---------------------------------------------------------------------------
# 1. geometry round trip
# ---------------------------------------------------------------------------

def test_criterion_1_geometry_roundtrip():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(1000):
        n = int(rng.integers(2, 9))
        rig = synth.make_rig(n, 0.6, seed=int(rng.integers(1 << 30)))
        pt = synth.rig_focus(rig) + rng.uniform(-0.05, 0.05, 3)
        obs = []
        for cam in rig.cameras:
            pix, _, front = geometry.project(pt[None], cam)
            assert front[0]
            obs.append((pix[0], cam))
        worst = max(worst, float(np.linalg.norm(geometry.triangulate_dlt(obs) - pt)))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-8
    assert elapsed < 5.0
    _report("criterion 1 (geometry round-trip)",
            f"1000 configs, worst error {worst:.2e} m in {elapsed:.2f} s")


# ---------------------------------------------------------------------------
# 2. gradcheck suite over every differentiable operation
# ---------------------------------------------------------------------------

def test_criterion_2_gradcheck_suite(tiny_hand):
    import poemkit.tensor as T
    rng = np.random.default_rng(2)
    results = {}

    # core tensor ops
    a = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(4, 2)))
    x = Tensor(rng.normal(size=(3, 4)))
    pos = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)))
    results["matmul"] = gradcheck(lambda a, b: tsum(square(a @ b)), [a, b])
    results["softmax"] = gradcheck(lambda x: tsum(square(T.softmax(x, axis=-1))), [x])
    results["layer_norm"] = gradcheck(lambda x: tsum(square(T.layer_norm(x))), [x])
    results["elementwise"] = gradcheck(
        lambda x, p: tsum(T.relu(x * p) + T.sqrt(p) / (T.exp(-x) + 2.0)), [x, pos])
    results["trig"] = gradcheck(lambda x: tsum(T.sin(x) * T.cos(x)), [x])
    results["gather_concat"] = gradcheck(
        lambda x: tsum(square(T.concat([T.gather(x, [1, 0]), T.gather(x, [2, 2])], axis=1))), [x])

    g = Tensor(rng.normal(size=(6, 7, 3)))
    c = Tensor(rng.uniform(0.3, 4.2, size=(5, 2)))
    results["bilinear_sample"] = gradcheck(
        lambda g, c: tsum(square(T.bilinear_sample(g, c)[0])), [g, c])

    h = Tensor(rng.uniform(0.1, 1.5, size=(6, 6)))
    results["soft_argmax"] = gradcheck(
        lambda h: tsum(square(root_stage.soft_argmax(h, stride=8))), [h])

    # aggregation (features and both projection layers)
    feats = [Tensor(rng.normal(size=(8, 16))) for _ in range(3)]
    masks = np.ones((3, 8), dtype=bool)
    th = Tensor(rng.normal(size=(16, 8)) * 0.3)
    ph = Tensor(rng.normal(size=(8, 16)) * 0.3)
    results["aggregation"] = gradcheck(
        lambda f0, f1, f2, th, ph: tsum(square(
            basis.projective_aggregation([f0, f1, f2], masks, th, ph))),
        [*feats, th, ph])

    # the three attention blocks and the FFN on a miniature model
    cfg = ModelConfig(d=16, n_layers=1, k=4, n_heads=2, m_pts=64, q=26, seed=1)
    mini_hand = build_hand_model(cfg.n_vertices)
    params = decoder.build_params(cfg)
    bps = basis.generate_bps(cfg.m_pts, cfg.diameter, seed=1)
    emb = Tensor(rng.normal(size=(cfg.q, cfg.d)))
    fp = Tensor(rng.normal(size=(cfg.m_pts, cfg.d)))
    Xq = Tensor(template_points(mini_hand))
    results["self_attention"] = gradcheck(
        lambda e: tsum(square(decoder.self_attention(e, params, "layer0.self", cfg.n_heads))),
        [emb])
    results["cross_attention"] = gradcheck(
        lambda e, f: tsum(square(decoder.cross_attention(e, f, params, "layer0.cross",
                                                         cfg.n_heads))), [emb, fp])
    # fix the kNN neighborhoods (the selection is piecewise constant) and pick
    # query positions whose ReLU pre-activations in the relative-encoding MLP
    # stay clear of zero within the finite-difference window
    vec_eps = 1e-6
    margin = 3 * vec_eps * np.abs(params["layer0.vec.xi.w1"].data).max()
    for nudge_seed in range(200):
        nudge = np.random.default_rng(nudge_seed).normal(0, 1e-3, Xq.data.shape)
        Xs = Tensor(template_points(mini_hand) + nudge)
        idx0 = decoder.knn(Xs.data, bps.points, cfg.k)
        rel = (Xs.data[:, None, :] - bps.points[idx0]).reshape(-1, 3)
        pre = rel @ params["layer0.vec.xi.w1"].data + params["layer0.vec.xi.b1"].data
        if np.abs(pre).min() > margin:
            break
    else:
        pytest.fail("no kink-free probe point found")
    results["vector_attention"] = gradcheck(
        lambda e, f, xq: tsum(square(decoder.vector_attention(
            e, xq, bps.points, f, cfg.k, params, "layer0.vec", knn_idx=idx0))),
        [emb, fp, Xs], eps=vec_eps)
    params["layer0.ffn.w2"].data = rng.normal(size=(cfg.d, 3)) * 0.1
    results["ffn_update"] = gradcheck(
        lambda e: tsum(square(decoder.ffn_update(e, template_points(mini_hand),
                                                 params, "layer0"))), [emb])

    # LBS and the losses
    theta = Tensor(rng.normal(size=(16, 3)) * 0.2)
    beta = Tensor(rng.normal(size=10) * 0.3)
    root = Tensor(rng.normal(size=3) * 0.05)

    def lbs_loss(theta, beta, root):
        V, J = fitting.lbs_forward(tiny_hand, theta, beta, root)
        return tsum(square(V)) + tsum(square(J))

    results["lbs"] = gradcheck(lbs_loss, [theta, beta, root])

    rig = synth.make_rig(3, 0.6, seed=7)
    scene = synth.random_scene(rig, seed=8)
    _, J = fitting.lbs_forward(tiny_hand, scene.theta, scene.beta, scene.root)
    kp = []
    for cam in rig.cameras:
        pix, _, front = geometry.project(J.data, cam)
        kp.append(np.concatenate([pix + rng.normal(0, 2, pix.shape),
                                  front[:, None].astype(float)], axis=1))
    kp = np.stack(kp)
    th2 = Tensor(scene.theta + rng.normal(0, 0.05, (16, 3)))
    be2 = Tensor(scene.beta.copy())
    ro2 = Tensor(scene.root.copy())
    results["loss_2d"] = gradcheck(
        lambda t, b, r: fitting.loss_2d(t, b, r, kp, rig, tiny_hand), [th2, be2, ro2])
    theta_hot = Tensor(np.full((16, 3), 0.5))  # clear of the hinge kinks
    theta_hot.data[2, 0] = 2.1                 # one active violation
    results["loss_kin"] = gradcheck(lambda t: fitting.loss_kin(t, tiny_hand), [theta_hot])
    pred = Tensor(rng.normal(size=(26, 3)) * 0.05)
    gt = rng.normal(size=(26, 3)) * 0.05
    results["mean_l2_loss"] = gradcheck(lambda p: training.mean_l2_loss(p, gt), [pred])

    bad = {k: v for k, v in results.items() if v > 1e-4}
    assert not bad, f"gradchecks over tolerance: {bad}"
    _report("criterion 2 (gradcheck suite)",
            f"{len(results)} operations, worst rel err {max(results.values()):.2e}")


# ---------------------------------------------------------------------------
# 3. projective aggregation contracts
# ---------------------------------------------------------------------------

def test_criterion_3_aggregation_contracts():
    rng = np.random.default_rng(3)
    feats = [Tensor(rng.normal(size=(32, 16))) for _ in range(5)]
    masks = np.ones((5, 32), dtype=bool)
    th = Tensor(rng.normal(size=(16, 8)) * 0.4)
    ph = Tensor(rng.normal(size=(8, 16)) * 0.4)

    out1 = basis.projective_aggregation(feats[:1], masks[:1], th, ph)
    assert np.array_equal(out1.data, feats[0].data)

    zeros = [feats[0]] + [Tensor(np.zeros((32, 16))) for _ in range(4)]
    outz = basis.projective_aggregation(zeros, masks, th, ph)
    assert np.array_equal(outz.data, feats[0].data)

    base = basis.projective_aggregation(feats, masks, th, ph).data
    worst = 0.0
    for order in ([0, 4, 3, 2, 1], [0, 2, 4, 1, 3], [0, 3, 1, 4, 2]):
        out = basis.projective_aggregation([feats[i] for i in order], masks[order], th, ph).data
        worst = max(worst, float(np.abs(out - base).max()))
    assert worst < 1e-12
    _report("criterion 3 (aggregation contracts)",
            f"N=1 bit-equal, zero-source identity, permutation drift {worst:.2e}")


# ---------------------------------------------------------------------------
# 4. vector attention contracts
# ---------------------------------------------------------------------------

def test_criterion_4_vector_attention_contracts(tiny_hand):
    rng = np.random.default_rng(4)
    cfg = ModelConfig(d=16, n_layers=1, k=6, n_heads=2, m_pts=64, q=98, seed=2)
    params = decoder.build_params(cfg)
    bps = basis.generate_bps(cfg.m_pts, cfg.diameter, seed=2)
    X = template_points(tiny_hand)
    emb = Tensor(rng.normal(size=(cfg.q, cfg.d)))
    F = rng.normal(size=(cfg.m_pts, cfg.d))

    _, w = decoder.vector_attention(emb, X, bps.points, Tensor(F), cfg.k, params,
                                    "layer0.vec", return_weights=True)
    sum_err = float(np.abs(w.data.sum(axis=1) - 1.0).max())
    assert sum_err < 1e-12

    idx = decoder.knn(X, bps.points, cfg.k)
    out = decoder.vector_attention(emb, X, bps.points, Tensor(F), cfg.k, params,
                                   "layer0.vec").data
    qi = 30
    outsider = next(j for j in range(cfg.m_pts) if j not in set(idx[qi]))
    F2 = F.copy()
    F2[outsider] -= 7.0
    out2 = decoder.vector_attention(emb, X, bps.points, Tensor(F2), cfg.k, params,
                                    "layer0.vec").data
    assert np.array_equal(out[qi], out2[qi])

    out_k1 = decoder.vector_attention(emb, X, bps.points, Tensor(F), 1, params,
                                      "layer0.vec").data
    nn = decoder.knn(X, bps.points, 1)[:, 0]
    rel = X - bps.points[nn]
    h = np.maximum(rel @ params["layer0.vec.xi.w1"].data + params["layer0.vec.xi.b1"].data, 0)
    delta = h @ params["layer0.vec.xi.w2"].data + params["layer0.vec.xi.b2"].data
    psi = F[nn] @ params["layer0.vec.psi.w"].data + params["layer0.vec.psi.b"].data
    k1_err = float(np.abs(out_k1 - (psi + delta)).max())
    assert k1_err < 1e-12
    _report("criterion 4 (vector attention contracts)",
            f"weight-sum err {sum_err:.2e}, locality exact, k=1 closed form err {k1_err:.2e}")


# ---------------------------------------------------------------------------
# 5. decoder identity at init across the config sweep
# ---------------------------------------------------------------------------

def test_criterion_5_identity_at_init(tiny_hand):
    tpl = template_points(tiny_hand)
    checked = 0
    for n in range(1, 9):
        rig = synth.make_rig(n, 0.6, seed=100 + n)
        scene = synth.random_scene(rig, seed=200 + n)
        frame = synth.render_frame(scene, rig, tiny_hand, channels=16)
        for L in (1, 3, 6):
            for k in (1, 16, 32):
                cfg = ModelConfig(d=16, n_layers=L, k=k, n_heads=2, m_pts=64, q=98, seed=3)
                params = decoder.build_params(cfg)
                bps = basis.generate_bps(cfg.m_pts, cfg.diameter, seed=3)
                root = frame.gt_root if n < 2 else None
                X, used_root = decoder.reconstruct_frame(cfg, params, bps, frame,
                                                         tiny_hand, root=root)
                assert np.array_equal(X, tpl + used_root), (n, L, k)
                checked += 1
    _report("criterion 5 (identity at init)",
            f"{checked} configs (N in 1..8, L in {{1,3,6}}, k in {{1,16,32}}) exact")


# ---------------------------------------------------------------------------
# 6. single-frame overfit
# ---------------------------------------------------------------------------

def test_criterion_6_single_frame_overfit(tiny_hand, fixed_rig):
    scene = synth.random_scene(fixed_rig, seed=11)
    frame = synth.render_frame(scene, fixed_rig, tiny_hand, channels=TINY.d)
    params = decoder.build_params(TINY)
    t0 = time.perf_counter()
    steps_done = 0
    rep = None
    while steps_done < 3000:
        training.train(TINY, params, [frame], steps=250, lr=2e-3, seed=0, schedule="const")
        steps_done += 250
        rep, _ = training.evaluate(TINY, params, [frame])
        if rep.mpjpe < 5.0 and rep.mpvpe < 5.0:
            break
    elapsed = time.perf_counter() - t0
    assert rep.mpjpe < 5.0 and rep.mpvpe < 5.0, \
        f"after {steps_done} steps: MPJPE {rep.mpjpe:.2f}, MPVPE {rep.mpvpe:.2f}"
    assert elapsed < 900.0
    _report("criterion 6 (single-frame overfit)",
            f"MPJPE {rep.mpjpe:.2f} mm, MPVPE {rep.mpvpe:.2f} mm "
            f"after {steps_done} steps in {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# 7. generalization vs the template baseline
# ---------------------------------------------------------------------------

def test_criterion_7_generalization(model_randomized, corpus, tiny_hand):
    _, test = corpus
    tpl = template_points(tiny_hand)
    baseline = metrics.evaluate_frames([tpl + f.gt_root for f in test],
                                       [f.gt_x for f in test], TINY.n_vertices)
    rep, _ = training.evaluate(TINY, model_randomized, test)
    assert rep.mpjpe <= 0.7 * baseline.mpjpe, \
        f"model {rep.mpjpe:.2f} mm vs baseline {baseline.mpjpe:.2f} mm"
    _report("criterion 7 (generalization)",
            f"model MPJPE {rep.mpjpe:.2f} mm <= 70% of template baseline "
            f"{baseline.mpjpe:.2f} mm on 50 held-out frames")


# ---------------------------------------------------------------------------
# 8. fitting baseline
# ---------------------------------------------------------------------------

def _keypoints_for(scene, rig, model, noise_rng=None):
    _, J = fitting.lbs_forward(model, scene.theta, scene.beta, scene.root)
    kp = []
    for cam in rig.cameras:
        pix, _, front = geometry.project(J.data, cam)
        if noise_rng is not None:
            pix = pix + noise_rng.normal(0, 1.0, pix.shape)
        kp.append(np.concatenate([pix, front[:, None].astype(float)], axis=1))
    return np.stack(kp), J.data


def test_criterion_8_fitting_baseline(tiny_hand, fixed_rig):
    # noiseless generate-and-recover
    scene = synth.random_scene(fixed_rig, seed=77)
    kp, J_true = _keypoints_for(scene, fixed_rig, tiny_hand)
    t0 = time.perf_counter()
    res = fitting.fit(kp, fixed_rig, tiny_hand)  # 300 iters, lr 1e-2, x0.5 plateau
    elapsed = time.perf_counter() - t0
    _, J_fit = fitting.lbs_forward(tiny_hand, res.theta, res.beta, res.root)
    err = metrics.mpjpe(J_fit.data, J_true)
    assert err < 2.0
    assert elapsed < 10.0

    # 1 px noise: 4 views beat 2 views in expectation over 50 trials
    noise_rng = np.random.default_rng(8)
    rig2 = synth.Rig(fixed_rig.cameras[:2])
    e4, e2 = [], []
    for t in range(50):
        sc = synth.random_scene(fixed_rig, seed=3000 + t)
        kp4, J = _keypoints_for(sc, fixed_rig, tiny_hand, noise_rng)
        r4 = fitting.fit(kp4, fixed_rig, tiny_hand)
        _, Jf = fitting.lbs_forward(tiny_hand, r4.theta, r4.beta, r4.root)
        e4.append(metrics.mpjpe(Jf.data, J))
        kp2 = kp4[:2]
        r2 = fitting.fit(kp2, rig2, tiny_hand)
        _, Jf2 = fitting.lbs_forward(tiny_hand, r2.theta, r2.beta, r2.root)
        e2.append(metrics.mpjpe(Jf2.data, J))
    assert np.mean(e4) < np.mean(e2), f"4-view {np.mean(e4):.2f} vs 2-view {np.mean(e2):.2f}"
    _report("criterion 8 (fitting baseline)",
            f"noiseless {err:.3f} mm in {elapsed:.1f} s; noisy 4-view "
            f"{np.mean(e4):.2f} mm < 2-view {np.mean(e2):.2f} mm over 50 trials")


# ---------------------------------------------------------------------------
# 9. metrics oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_9_metrics_oracles():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        p = rng.normal(size=(21, 3)) * 0.05
        g = rng.normal(size=(21, 3)) * 0.05
        # brute-force re-implementations
        ref_mpjpe = np.mean([np.sqrt(((p[i] - g[i]) ** 2).sum()) for i in range(21)]) * 1000
        worst = max(worst, abs(metrics.mpjpe(p, g) - ref_mpjpe))
        pr, gr = p - p[9], g - g[9]
        ref_rr = np.mean(np.linalg.norm(pr - gr, axis=1)) * 1000
        worst = max(worst, abs(metrics.rr(p, g) - ref_rr))
        aligned, _, _, _ = geometry.procrustes_align(p, g)
        ref_pa = np.mean(np.linalg.norm(aligned - g, axis=1)) * 1000
        worst = max(worst, abs(metrics.pa(p, g) - ref_pa))
        assert metrics.pa(p, g) <= metrics.mpjpe(p, g) + 1e-12
        errs = rng.uniform(0, 30, size=64)
        ts = np.linspace(0, 20, 100)
        pck = [(errs <= t).mean() for t in ts]
        ref_auc = sum((pck[i] + pck[i + 1]) / 2 * (ts[i + 1] - ts[i]) for i in range(99)) / 20
        worst = max(worst, abs(metrics.auc(errs, 0, 20) - ref_auc))
    assert worst < 1e-12
    assert metrics.auc(np.zeros(10), 0, 20) == 1.0
    assert metrics.auc(np.full(10, 99.0), 0, 20) == 0.0
    _report("criterion 9 (metrics oracles)",
            f"100 random pairs, worst deviation {worst:.2e}; AUC endpoints exact")


# ---------------------------------------------------------------------------
# 10. mirror and rotation consistency with a frozen model
# ---------------------------------------------------------------------------

def test_criterion_10_mirror_and_rotation(tiny_hand):
    cfg = ModelConfig(d=16, n_layers=1, k=4, n_heads=2, m_pts=64, q=98, seed=6)
    params = decoder.build_params(cfg)
    rng = np.random.default_rng(10)
    for l in range(cfg.n_layers):  # frozen but non-trivial coordinate path
        params[f"layer{l}.ffn.w2"].data = rng.normal(size=(cfg.d, 3)) * 0.01
    bps = basis.generate_bps(cfg.m_pts, cfg.diameter, seed=6)

    def left_hand_path(frame):
        # the real-world left-hand procedure: mirror in, reconstruct, mirror out
        X, _ = decoder.reconstruct_frame(cfg, params, bps, synth.mirror_bundle(frame),
                                         tiny_hand)
        return geometry.mirror_points(X)

    worst_mirror = 0.0
    worst_rot = 0.0
    for t in range(100):
        rig = synth.make_rig(int(rng.integers(2, 6)), 0.6, seed=int(rng.integers(1 << 30)))
        scene = synth.random_scene(rig, seed=int(rng.integers(1 << 30)))
        frame = synth.render_frame(scene, rig, tiny_hand, channels=cfg.d)

        direct, _ = decoder.reconstruct_frame(cfg, params, bps, frame, tiny_hand)
        via_mirror = geometry.mirror_points(left_hand_path(synth.mirror_bundle(frame)))
        worst_mirror = max(worst_mirror, float(np.abs(via_mirror - direct).max()))

        cam = rig[int(rng.integers(len(rig)))]
        A, cam_rot = geometry.rotate_augment(cam, rng.uniform(-np.pi, np.pi))
        pix, _, _ = geometry.project(frame.gt_x, cam)
        pix_rot, _, _ = geometry.project(frame.gt_x, cam_rot)
        worst_rot = max(worst_rot, float(np.abs(geometry.apply_pixel_map(A, pix) - pix_rot).max()))
    assert worst_mirror < 1e-9
    assert worst_rot < 1e-9
    _report("criterion 10 (mirror/rotation consistency)",
            f"100 frames: mirror path drift {worst_mirror:.2e} m, "
            f"rotation commutation {worst_rot:.2e} px")


# ---------------------------------------------------------------------------
# 11. camera-order robustness echo
# ---------------------------------------------------------------------------

def test_criterion_11_robustness_echo(model_fixed_order, model_randomized, corpus):
    _, test = corpus
    rng = np.random.default_rng(77)
    shuffled = [synth.reanchor(f, rng.permutation(f.n_views)) for f in test]

    rep_a, _ = training.evaluate(TINY, model_fixed_order, test)
    rep_a_shuf, _ = training.evaluate(TINY, model_fixed_order, shuffled)
    degr_a = (rep_a_shuf.mpjpe - rep_a.mpjpe) / rep_a.mpjpe

    rep_b, _ = training.evaluate(TINY, model_randomized, test)
    rep_b_shuf, _ = training.evaluate(TINY, model_randomized, shuffled)
    degr_b = (rep_b_shuf.mpjpe - rep_b.mpjpe) / rep_b.mpjpe

    assert degr_a >= 0.25, f"fixed-order model degraded only {degr_a:.1%}"
    assert degr_b <= 0.05, f"randomized model degraded {degr_b:.1%}"
    _report("criterion 11 (robustness echo)",
            f"fixed-order training degrades {degr_a:.0%} under shuffle "
            f"(MPJPE {rep_a.mpjpe:.2f} -> {rep_a_shuf.mpjpe:.2f} mm); "
            f"randomized training degrades {degr_b:.0%} "
            f"(MPJPE {rep_b.mpjpe:.2f} -> {rep_b_shuf.mpjpe:.2f} mm)")
