"""Pose/mesh error metrics: MPJPE, MPVPE, root-relative and
Procrustes-aligned variants, and PCK area-under-curve.

Inputs are meters; reported numbers are millimeters.  Frame aggregation
pools the points of each frame, then averages over frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .geometry import procrustes_align

ROOT_INDEX = 9  # middle-finger MCP


def mpjpe(pred, gt):
    """Mean per-point Euclidean distance in millimeters."""
    p, g = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"matched Nx3 arrays required, got {p.shape} and {g.shape}")
    return float(np.linalg.norm(p - g, axis=1).mean() * 1000.0)


mpvpe = mpjpe  # same computation over vertices


def point_errors_mm(pred, gt):
    return np.linalg.norm(np.asarray(pred) - np.asarray(gt), axis=1) * 1000.0


def rr(pred, gt, root_index=ROOT_INDEX):
    """Root-relative error: both sets re-centered at their own root joint."""
    p, g = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    return mpjpe(p - p[root_index], g - g[root_index])


def pa(pred, gt):
    """Procrustes-aligned error (similarity transform removed)."""
    aligned, _, _, _ = procrustes_align(pred, gt)
    return mpjpe(aligned, gt)


def auc(errors_mm, lo, hi, n_steps=100):
    """Normalized trapezoidal area under PCK(t) for t in [lo, hi] mm."""
    e = np.asarray(errors_mm, dtype=np.float64)
    if e.size == 0:
        raise ValueError("auc of an empty error list")
    if not hi > lo or lo < 0:
        raise ValueError(f"need hi > lo >= 0, got [{lo}, {hi}]")
    ts = np.linspace(lo, hi, n_steps)
    pck = np.array([(e <= t).mean() for t in ts])
    # trapezoid weights normalized so constant PCK integrates exactly
    w = np.ones(n_steps)
    w[0] = w[-1] = 0.5
    return float((pck * w).sum() / (n_steps - 1))


@dataclass
class EvalReport:
    mpvpe: float
    rr_v: float
    pa_v: float
    auc_v: float
    mpjpe: float
    rr_j: float
    pa_j: float
    auc_j: float
    threshold_range: tuple = (0.0, 20.0)
    n_frames: int = 0

    def row(self):
        """Fixed column order: MPVPE, RR_V, PA_V, AUC_V, MPJPE, RR_J, PA_J, AUC_J."""
        return [self.mpvpe, self.rr_v, self.pa_v, self.auc_v,
                self.mpjpe, self.rr_j, self.pa_j, self.auc_j]

    COLUMNS = ("MPVPE", "RR_V", "PA_V", "AUC_V", "MPJPE", "RR_J", "PA_J", "AUC_J")

    def table(self):
        head = "  ".join(f"{c:>7s}" for c in self.COLUMNS)
        vals = "  ".join(f"{v:7.3f}" for v in self.row())
        return f"{head}\n{vals}"

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=1)


def evaluate_frames(preds, gts, n_vertices, thresholds=(0.0, 20.0), n_steps=100) -> EvalReport:
    """Aggregate per-frame metrics; preds/gts are lists of (Q, 3) arrays with
    vertices first and the 21 joints last."""
    if len(preds) != len(gts) or not preds:
        raise ValueError("need equal non-empty prediction/ground-truth lists")
    rows = {k: [] for k in ("mpvpe", "rr_v", "pa_v", "auc_v", "mpjpe", "rr_j", "pa_j", "auc_j")}
    lo, hi = thresholds
    for p, g in zip(preds, gts):
        pv, gv = p[:n_vertices], g[:n_vertices]
        pj, gj = p[n_vertices:], g[n_vertices:]
        rows["mpvpe"].append(mpvpe(pv, gv))
        rows["rr_v"].append(mpjpe(pv - pj[ROOT_INDEX], gv - gj[ROOT_INDEX]))
        rows["pa_v"].append(pa(pv, gv))
        rows["auc_v"].append(auc(point_errors_mm(pv, gv), lo, hi, n_steps))
        rows["mpjpe"].append(mpjpe(pj, gj))
        rows["rr_j"].append(rr(pj, gj))
        rows["pa_j"].append(pa(pj, gj))
        rows["auc_j"].append(auc(point_errors_mm(pj, gj), lo, hi, n_steps))
    means = {k: float(np.mean(v)) for k, v in rows.items()}
    return EvalReport(threshold_range=(lo, hi), n_frames=len(preds), **means)
