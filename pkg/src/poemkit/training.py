"""Training and evaluation drivers shared by the CLI and the test suite."""

from __future__ import annotations

import numpy as np

from . import basis, decoder, metrics, root_stage
from .hand import build_hand_model, template_points
from .tensor import Tape, adam_step, backward, sqrt, square, tsum


class TrainingDiverged(RuntimeError):
    def __init__(self, step, bad_names):
        super().__init__(f"non-finite loss at step {step}; offending tensors: {', '.join(bad_names) or 'loss only'}")
        self.bad_names = bad_names


def mean_l2_loss(pred, gt):
    """Mean over points of the Euclidean distance to the target (meters)."""
    diff = pred - np.asarray(gt, dtype=np.float64)
    return tsum(sqrt(tsum(square(diff), axis=1) + 1e-12)) * (1.0 / diff.data.shape[0])


def frame_root(frame, use_gt_root=False):
    """Estimated root for multi-view frames; ground truth when demanded or
    when only one view exists (single-view DLT is impossible)."""
    if use_gt_root or frame.n_views < 2:
        return frame.gt_root
    return root_stage.estimate_root(frame.heatmaps, frame.rig)


class FrameCache:
    """Per-frame constant prefix of the pipeline (root, placed basis,
    sampled per-view features).  Valid only for un-randomized frames."""

    def __init__(self, config, bps):
        self.config = config
        self.bps = bps
        self._store = {}

    def get(self, frame, use_gt_root=False):
        key = id(frame)
        if key not in self._store:
            root = frame_root(frame, use_gt_root)
            placed = basis.place_basis(self.bps, root)
            feats, masks = basis.sample_projected_features(placed, frame.rig, frame.feature_grids)
            self._store[key] = (root, placed, feats, masks)
        return self._store[key]


def forward_loss(config, params, bps, hand_model, frame, cache=None, use_gt_root=False,
                 deep_supervision=False):
    """Loss of one frame; deep_supervision averages over every layer's output
    instead of supervising only the final one."""
    if cache is not None:
        root, placed, feats, masks = cache.get(frame, use_gt_root)
    else:
        root = frame_root(frame, use_gt_root)
        placed = basis.place_basis(bps, root)
        feats, masks = basis.sample_projected_features(placed, frame.rig, frame.feature_grids)
    fused = basis.projective_aggregation(feats, masks, params["agg.theta"], params["agg.phi"])
    if deep_supervision:
        _, layers = decoder.decoder_forward(fused, placed.world, root, config, params,
                                            template_points(hand_model), return_layers=True)
        total = mean_l2_loss(layers[0], frame.gt_x)
        for X in layers[1:]:
            total = total + mean_l2_loss(X, frame.gt_x)
        return total * (1.0 / len(layers))
    X = decoder.decoder_forward(fused, placed.world, root, config, params,
                                template_points(hand_model))
    return mean_l2_loss(X, frame.gt_x)


def lr_at(base_lr, step, total, schedule="cosine"):
    if schedule == "cosine":
        return base_lr * 0.5 * (1.0 + np.cos(np.pi * step / max(total, 1)))
    if schedule == "step":
        return base_lr * (0.1 ** (step // max(total // 2, 1)))
    return base_lr


def train(config, params, frames, steps, lr=1e-3, seed=0, randomize=False,
          schedule="cosine", use_gt_root=False, deep_supervision=False, log_cb=None):
    """Adam training on the mean-L2 query-point loss; returns the loss trace.

    randomize: apply view-count/order randomization per step (re-anchored
    world, per the camera-robustness training recipe).
    """
    from .synth import randomize_views  # local: synth imports this module's deps

    bps = basis.generate_bps(config.m_pts, config.diameter, seed=config.seed)
    hand_model = build_hand_model(config.n_vertices)
    cache = FrameCache(config, bps) if not randomize else None
    trace = []
    for step in range(steps):
        frame = frames[step % len(frames)]
        if randomize:
            frame = randomize_views(frame, seed=(seed * 1_000_003 + step))
        params.zero_grad()
        with Tape():
            loss = forward_loss(config, params, bps, hand_model, frame,
                                cache=cache, use_gt_root=use_gt_root,
                                deep_supervision=deep_supervision)
            val = loss.item()
            if not np.isfinite(val):
                bad = [n for n, p in params.params.items() if not np.all(np.isfinite(p.data))]
                raise TrainingDiverged(step, bad)
            backward(loss)
        for p in params.params.values():
            # single-view steps bypass the aggregation; its params get zero grad
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        cur_lr = lr_at(lr, step, steps, schedule)
        adam_step(params, lr=cur_lr)
        trace.append(val)
        if log_cb is not None:
            log_cb(step, val, cur_lr)
    return trace


def predict_frames(config, params, bps, hand_model, frames, use_gt_root=False):
    preds = []
    for frame in frames:
        root = frame_root(frame, use_gt_root)
        X, _ = decoder.reconstruct_frame(config, params, bps, frame, hand_model, root=root)
        preds.append(X)
    return preds


def evaluate(config, params, frames, use_gt_root=False, thresholds=(0.0, 20.0)):
    bps = basis.generate_bps(config.m_pts, config.diameter, seed=config.seed)
    hand_model = build_hand_model(config.n_vertices)
    preds = predict_frames(config, params, bps, hand_model, frames, use_gt_root)
    gts = [f.gt_x for f in frames]
    report = metrics.evaluate_frames(preds, gts, config.n_vertices, thresholds=thresholds)
    return report, preds
