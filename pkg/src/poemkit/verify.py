"""Built-in oracle suite behind the `verify` subcommand.

Each check is independent and seeded; the suite also runs two fault-injection
checks that flip a known defect on and assert that exactly the intended
contract check catches it.
"""

from __future__ import annotations

import numpy as np

from . import basis, decoder, geometry, hooks, root_stage, synth
from .hand import build_hand_model, template_points
from .tensor import (Tensor, bilinear_sample, gather, gradcheck, relu, reshape,
                     softmax, square, tsum)


class CheckFailure(AssertionError):
    pass


def _require(cond, msg):
    if not cond:
        raise CheckFailure(msg)


def _tiny_setup(seed=0):
    cfg = decoder.ModelConfig(d=16, n_layers=1, k=4, n_heads=2, m_pts=64, q=98, seed=seed)
    model = build_hand_model(cfg.n_vertices)
    rig = synth.make_rig(4, 0.6, seed=seed + 3)
    frame = synth.render_frame(synth.random_scene(rig, seed=seed + 11), rig, model, channels=cfg.d)
    params = decoder.build_params(cfg)
    bps = basis.generate_bps(cfg.m_pts, cfg.diameter, seed=cfg.seed)
    return cfg, model, frame, params, bps


def check_gradchecks():
    rng = np.random.default_rng(0)
    checks = []
    a = Tensor(rng.normal(size=(4, 5)))
    b = Tensor(rng.normal(size=(5, 3)))
    checks.append(("matmul", gradcheck(lambda a, b: tsum(square(a @ b)), [a, b])))
    x = Tensor(rng.normal(size=(3, 6)))
    checks.append(("softmax", gradcheck(lambda x: tsum(square(softmax(x, axis=-1))), [x])))
    g = Tensor(rng.normal(size=(6, 7, 3)))
    c = Tensor(rng.uniform(0.3, 4.5, size=(5, 2)))
    checks.append(("bilinear", gradcheck(
        lambda g, c: tsum(square(bilinear_sample(g, c)[0])), [g, c])))
    h = Tensor(rng.uniform(0.1, 2.0, size=(6, 6)))
    checks.append(("soft_argmax", gradcheck(
        lambda h: tsum(square(root_stage.soft_argmax(h, stride=8))), [h])))
    for name, err in checks:
        _require(err <= 1e-4, f"gradcheck {name}: max rel err {err:.2e} > 1e-4")


def check_triangulation_roundtrip(n_trials=100):
    rng = np.random.default_rng(1)
    worst = 0.0
    for t in range(n_trials):
        n = int(rng.integers(2, 9))
        rig = synth.make_rig(n, 0.6, seed=int(rng.integers(1 << 30)))
        pt = synth.rig_focus(rig) + rng.uniform(-0.05, 0.05, 3)
        obs = []
        for cam in rig.cameras:
            pix, _, infront = geometry.project(pt[None], cam)
            _require(infront[0], "test point behind a camera")
            obs.append((pix[0], cam))
        err = np.linalg.norm(geometry.triangulate_dlt(obs) - pt)
        worst = max(worst, err)
    _require(worst < 1e-8, f"triangulation round-trip worst err {worst:.2e} >= 1e-8")


def _agg_inputs(seed=0, n=4, m=32, d=16):
    rng = np.random.default_rng(seed)
    feats = [Tensor(rng.normal(size=(m, d))) for _ in range(n)]
    masks = np.ones((n, m), dtype=bool)
    theta = Tensor(rng.normal(size=(d, d // 2)) * 0.3)
    phi = Tensor(rng.normal(size=(d // 2, d)) * 0.3)
    return feats, masks, theta, phi


def check_aggregation_permutation():
    feats, masks, theta, phi = _agg_inputs()
    out = basis.projective_aggregation(feats, masks, theta, phi).data
    order = [0, 3, 1, 2]
    out_p = basis.projective_aggregation([feats[i] for i in order],
                                         masks[order], theta, phi).data
    diff = np.abs(out - out_p).max()
    _require(diff < 1e-12, f"source permutation changed aggregation by {diff:.2e}")


def check_aggregation_shortcut():
    feats, masks, theta, phi = _agg_inputs()
    # literal single view: bit-equal passthrough
    out1 = basis.projective_aggregation(feats[:1], masks[:1], theta, phi)
    _require(np.array_equal(out1.data, feats[0].data), "N=1 shortcut not bit-equal")
    # all-masked (zero) sources must degenerate to the shortcut result
    zfeats = [feats[0]] + [Tensor(np.zeros_like(f.data)) for f in feats[1:]]
    zmasks = masks.copy()
    zmasks[1:] = False
    out = basis.projective_aggregation(zfeats, zmasks, theta, phi)
    _require(np.array_equal(out.data, feats[0].data),
             "zero-source aggregation does not reduce to the single-view shortcut")


def check_vector_attention_weights():
    cfg, model, frame, params, bps = _tiny_setup()
    rng = np.random.default_rng(2)
    emb = Tensor(rng.normal(size=(cfg.q, cfg.d)))
    F_P = Tensor(rng.normal(size=(cfg.m_pts, cfg.d)))
    X = template_points(model)
    P = bps.points
    # recompute the attention weights exactly as the block does
    idx = decoder.knn(X, P, cfg.k)
    p = params
    a = emb @ p["layer0.vec.alpha.w"] + p["layer0.vec.alpha.b"]
    bF = F_P @ p["layer0.vec.beta.w"] + p["layer0.vec.beta.b"]
    bN = gather(bF, idx)
    rel = reshape(Tensor(X), (cfg.q, 1, 3)) - P[idx]
    delta = reshape(relu(reshape(rel, (-1, 3)) @ p["layer0.vec.xi.w1"] + p["layer0.vec.xi.b1"])
                    @ p["layer0.vec.xi.w2"] + p["layer0.vec.xi.b2"], (cfg.q, cfg.k, cfg.d))
    pre = reshape(a, (cfg.q, 1, cfg.d)) - bN + delta
    gam = reshape(reshape(pre, (-1, cfg.d)) @ p["layer0.vec.gamma.w"] + p["layer0.vec.gamma.b"],
                  (cfg.q, cfg.k, cfg.d))
    axis = 2 if hooks.on(hooks.VEC_SOFTMAX_WRONG_AXIS) else 1
    w = softmax(gam, axis=axis).data
    sums = w.sum(axis=1)
    _require(np.abs(sums - 1.0).max() < 1e-12,
             f"per-channel neighbor weights sum off by {np.abs(sums - 1.0).max():.2e}")


def check_vector_attention_locality():
    cfg, model, frame, params, bps = _tiny_setup()
    rng = np.random.default_rng(3)
    emb = Tensor(rng.normal(size=(cfg.q, cfg.d)))
    F = rng.normal(size=(cfg.m_pts, cfg.d))
    X = template_points(model)
    idx = decoder.knn(X, bps.points, cfg.k)
    out = decoder.vector_attention(emb, X, bps.points, Tensor(F), cfg.k, params, "layer0.vec").data
    qi = 5
    outside = [j for j in range(cfg.m_pts) if j not in set(idx[qi])]
    F2 = F.copy()
    F2[outside[0]] += 10.0
    out2 = decoder.vector_attention(emb, X, bps.points, Tensor(F2), cfg.k, params, "layer0.vec").data
    _require(np.array_equal(out[qi], out2[qi]),
             "perturbing a non-neighbor basis point changed a query's output")


def check_decoder_identity():
    cfg, model, frame, params, bps = _tiny_setup()
    X, root = decoder.reconstruct_frame(cfg, params, bps, frame, model)
    _require(np.array_equal(X, template_points(model) + root),
             "untrained decoder output differs from template + root")


def check_mirror_involution():
    cfg, model, frame, params, bps = _tiny_setup(seed=5)
    twice = synth.mirror_bundle(synth.mirror_bundle(frame))
    for c0, c1 in zip(frame.rig.cameras, twice.rig.cameras):
        _require(np.abs(c0.pose.T - c1.pose.T).max() < 1e-12, "mirror twice changed a pose")
        _require(np.abs(c0.intrinsics.K - c1.intrinsics.K).max() < 1e-12, "mirror twice changed K")
    _require(np.abs(frame.gt_x - twice.gt_x).max() < 1e-12, "mirror twice changed points")
    # projection commutation
    mir = synth.mirror_bundle(frame)
    rng = np.random.default_rng(8)
    pts = frame.gt_root + rng.uniform(-0.05, 0.05, (50, 3))
    for i, cam in enumerate(frame.rig.cameras):
        pix, _, _ = geometry.project(pts, cam)
        pixm, _, _ = geometry.project(geometry.mirror_points(pts), mir.rig[i])
        flipped = pix.copy()
        flipped[:, 0] = cam.width - 1 - pix[:, 0]
        _require(np.abs(pixm - flipped).max() < 1e-9, "mirror projection commutation broke")


def check_rotation_commutation():
    rng = np.random.default_rng(9)
    rig = synth.make_rig(3, 0.6, seed=21)
    pts = synth.rig_focus(rig) + rng.uniform(-0.08, 0.08, (100, 3))
    worst = 0.0
    for cam in rig.cameras:
        a = rng.uniform(-np.pi, np.pi)
        A, cam2 = geometry.rotate_augment(cam, a)
        pix, _, _ = geometry.project(pts, cam)
        pix2, _, _ = geometry.project(pts, cam2)
        mapped = geometry.apply_pixel_map(A, pix)
        worst = max(worst, np.abs(mapped - pix2).max())
    _require(worst < 1e-9, f"rotation commutation err {worst:.2e} >= 1e-9 px")


def check_mutation_sensitivity():
    """The fault hooks must be caught by exactly the intended check."""
    with hooks.enable(hooks.AGG_TARGET_SIGN_FLIP):
        check_aggregation_permutation()  # must still pass: both orders mutated alike
        try:
            check_aggregation_shortcut()
        except CheckFailure:
            pass
        else:
            raise CheckFailure("shortcut check missed the aggregation sign flip")
    with hooks.enable(hooks.VEC_SOFTMAX_WRONG_AXIS):
        try:
            check_vector_attention_weights()
        except CheckFailure:
            pass
        else:
            raise CheckFailure("weight-sum check missed the wrong softmax axis")


ALL_CHECKS = [
    ("gradchecks", check_gradchecks),
    ("triangulation-roundtrip", check_triangulation_roundtrip),
    ("aggregation-permutation", check_aggregation_permutation),
    ("aggregation-single-view-shortcut", check_aggregation_shortcut),
    ("vector-attention-weight-sums", check_vector_attention_weights),
    ("vector-attention-locality", check_vector_attention_locality),
    ("decoder-identity-at-init", check_decoder_identity),
    ("mirror-consistency", check_mirror_involution),
    ("rotation-commutation", check_rotation_commutation),
    ("mutation-sensitivity", check_mutation_sensitivity),
]


def run_all(out=print):
    failures = 0
    for name, fn in ALL_CHECKS:
        try:
            fn()
        except Exception as e:  # report and keep going
            failures += 1
            out(f"[FAIL] {name}: {e}")
        else:
            out(f"[ok]   {name}")
    return failures
