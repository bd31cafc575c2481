"""Figure and delimited-output rendering for the report paths.

Every report-producing subcommand writes its numbers as CSV/JSON and a
matplotlib PNG next to them.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_loss_csv(rows, path):
    """rows: iterable of (step, loss, lr)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss", "lr"])
        for step, loss, lr in rows:
            w.writerow([step, repr(float(loss)), repr(float(lr))])


def save_loss_curve(losses, path, title="training loss"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(losses)), losses, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_metrics_csv(report, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(report.COLUMNS)
        w.writerow([f"{v:.6f}" for v in report.row()])


def save_pck_curves(joint_errors_mm, vertex_errors_mm, lo, hi, path, n_steps=100):
    ts = np.linspace(lo, hi, n_steps)
    je = np.asarray(joint_errors_mm)
    ve = np.asarray(vertex_errors_mm)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, [(je <= t).mean() for t in ts], label="joints")
    ax.plot(ts, [(ve <= t).mean() for t in ts], label="vertices")
    ax.set_xlabel("threshold (mm)")
    ax.set_ylabel("fraction correct")
    ax.set_ylim(0, 1.02)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_fit_trace(trace, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(trace)), trace, lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective (px^2)")
    ax.set_yscale("log")
    ax.set_title("fitting objective")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
