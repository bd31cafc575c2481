"""Command-line entry point.

Subcommands: gen, reconstruct, train, fit, eval, verify, bps-export.
Exit codes: 0 success, 1 verification failure, 2 I/O or config error,
3 numerical degeneracy.  Outputs are written atomically (temp + rename);
report paths emit CSV plus a matplotlib PNG beside the JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import basis, decoder, fitting, geometry, metrics, report, synth, training, verify
from .hand import build_hand_model
from .tensor import load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_IO = 2
EXIT_DEGENERATE = 3


class CliError(Exception):
    def __init__(self, msg, code=EXIT_IO):
        super().__init__(msg)
        self.code = code


def _atomic_write(path, write_fn):
    """Write via a sibling temp file and rename; no partial output on failure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_json(path, obj):
    _atomic_write(path, lambda tmp: Path(tmp).write_text(json.dumps(obj, indent=1)))


def _seed_of(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("POEMKIT_SEED")
    return int(env) if env else 0


def _load_config(path):
    if path is None:
        return decoder.ModelConfig()
    try:
        return decoder.ModelConfig.from_json(path)
    except (OSError, KeyError, ValueError) as e:
        raise CliError(f"cannot load model config {path}: {e}")


def _load_dataset(data_dir):
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.json"
    if not manifest.exists():
        raise CliError(f"no manifest.json in {data_dir}")
    with open(manifest) as f:
        man = json.load(f)
    frames = []
    for i in range(man["n_frames"]):
        frames.append(synth.load_bundle(data_dir / f"frame_{i:05d}"))
    return man, frames


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args):
    seed = _seed_of(args)
    cfg = _load_config(args.config)
    gen_cfg = {
        "n_frames": args.n_frames,
        "cameras": args.cameras,
        "radius": args.radius,
        "image_size": [args.image, args.image],
        "focal": args.focal,
        "channels": cfg.d,
        "n_vertices": cfg.n_vertices,
        "stride": args.stride,
        "rig_per_frame": bool(args.rig_per_frame),
        "seed": seed,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = build_hand_model(cfg.n_vertices)
    rig = synth.make_rig(args.cameras, args.radius, seed, (args.image, args.image), args.focal)

    def one(i):
        r = synth.make_rig(args.cameras, args.radius, seed + 7919 * (i + 1),
                           (args.image, args.image), args.focal) if args.rig_per_frame else rig
        scene = synth.random_scene(r, seed=seed * 1_000_003 + i)
        frame = synth.render_frame(scene, r, model, channels=cfg.d,
                                   stride=args.stride, frame_id=f"frame_{i:05d}")
        synth.save_bundle(frame, out / f"frame_{i:05d}")

    with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as ex:
        list(ex.map(one, range(args.n_frames)))
    _atomic_json(out / "manifest.json",
                 {"n_frames": args.n_frames, "seed": seed, "config": gen_cfg,
                  "config_hash": synth.config_hash(gen_cfg), "format": 1})
    print(f"wrote {args.n_frames} frames to {out}")
    return EXIT_OK


def _check_checkpoint(params, cfg):
    expected = decoder.build_params(cfg)
    problems = []
    for name, p in expected.params.items():
        if name not in params:
            problems.append(f"missing parameter {name} {p.data.shape}")
        elif params[name].data.shape != p.data.shape:
            problems.append(f"{name}: checkpoint {params[name].data.shape} != config {p.data.shape}")
    for name in params.names():
        if name not in expected:
            problems.append(f"unexpected parameter {name}")
    if problems:
        raise CliError("checkpoint/config mismatch:\n  " + "\n  ".join(problems))


def cmd_reconstruct(args):
    cfg = _load_config(args.config)
    if not Path(args.checkpoint).exists():
        raise CliError(f"checkpoint not found: {args.checkpoint}")
    params = load_checkpoint(args.checkpoint)
    _check_checkpoint(params, cfg)
    man, frames = _load_dataset(args.data)
    seed = _seed_of(args)
    model = build_hand_model(cfg.n_vertices)
    bps = basis.generate_bps(cfg.m_pts, cfg.diameter, seed=cfg.seed)

    def one(item):
        i, frame = item
        order = list(range(frame.n_views))
        if args.views == "random":
            rng = np.random.Generator(np.random.PCG64(seed * 1_000_003 + i))
            keep = int(rng.integers(1, frame.n_views + 1))
            order = [int(x) for x in rng.permutation(frame.n_views)[:keep]]
            frame = synth.reanchor(frame, order)
        elif args.views:
            order = [int(x) for x in args.views.split(",")]
            frame = synth.reanchor(frame, order)
        if args.mirror:
            frame = synth.mirror_bundle(frame)
        if frame.n_views < 2 and not args.use_gt_root:
            raise CliError("single-view frame has no DLT root; pass --use-gt-root",
                           EXIT_DEGENERATE)
        root = frame.gt_root if args.use_gt_root else None
        t0 = time.perf_counter()
        X, used_root = decoder.reconstruct_frame(cfg, params, bps, frame, model, root=root)
        wall = time.perf_counter() - t0
        if args.mirror:
            X = geometry.mirror_points(X)
            used_root = geometry.mirror_points(used_root)
        return {"frame_id": frame.frame_id or f"frame_{i:05d}", "view_order": order,
                "mirrored": bool(args.mirror), "root": used_root.tolist(),
                "x": X.tolist(), "wall_time_s": wall}

    with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as ex:
        preds = list(ex.map(one, enumerate(frames)))
    _atomic_json(args.out, {"config": cfg.describe(), "frames": preds})
    print(f"reconstructed {len(preds)} frames -> {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_config(args.config)
    man, frames = _load_dataset(args.data)
    seed = _seed_of(args)
    if args.resume:
        params = load_checkpoint(args.resume)
        _check_checkpoint(params, cfg)
    else:
        params = decoder.build_params(cfg)
    rows = []

    def log(step, loss, lr):
        rows.append((params.step, loss, lr))
        if args.verbose and step % 100 == 0:
            print(f"step {params.step:6d} loss {loss:.6f} lr {lr:.2e}")

    try:
        training.train(cfg, params, frames, steps=args.steps, lr=args.lr, seed=seed,
                       randomize=(args.views == "random"), schedule=args.schedule,
                       deep_supervision=args.deep_supervision, log_cb=log)
    except training.TrainingDiverged as e:
        raise CliError(str(e), EXIT_DEGENERATE)
    _atomic_write(args.out, lambda tmp: save_checkpoint(params, tmp))
    out = Path(args.out)
    report.write_loss_csv(rows, out.with_suffix(".loss.csv"))
    if rows:
        report.save_loss_curve([r[1] for r in rows], out.with_suffix(".loss.png"))
    print(f"trained {args.steps} steps (counter at {params.step}) -> {args.out}")
    return EXIT_OK


def cmd_fit(args):
    try:
        kp = fitting.load_keypoints(args.keypoints)
        rig = geometry.load_rig(args.rig)
    except (OSError, KeyError, ValueError) as e:
        raise CliError(f"cannot load inputs: {e}")
    model = build_hand_model(args.n_vertices)
    opts = fitting.FitOptions(n_iters=args.iters, lr=args.lr)
    try:
        res = fitting.fit(kp, rig, model, opts)
    except geometry.DegenerateGeometryError as e:
        raise CliError(f"degenerate geometry: {e}", EXIT_DEGENERATE)
    _atomic_json(args.out, res.to_dict())
    report.save_fit_trace(res.loss_trace, Path(args.out).with_suffix(".trace.png"))
    print(f"fit: {len(res.loss_trace)} iters, final loss "
          f"{res.loss_trace[-1] if res.loss_trace else float('nan'):.4e} -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    try:
        with open(args.predictions) as f:
            preds = json.load(f)
    except OSError as e:
        raise CliError(f"cannot read predictions: {e}")
    man, frames = _load_dataset(args.data)
    by_id = {f.frame_id: f for f in frames}
    missing = [p["frame_id"] for p in preds["frames"] if p["frame_id"] not in by_id]
    if missing:
        raise CliError(f"predictions reference frames missing from the dataset: {missing}")
    pred_x, gt_x = [], []
    for p in preds["frames"]:
        frame = by_id[p["frame_id"]]
        order = p.get("view_order", list(range(frame.n_views)))
        if order != list(range(frame.n_views)):
            frame = synth.reanchor(frame, order)
        pred_x.append(np.array(p["x"]))
        gt_x.append(frame.gt_x)
    n_vertices = pred_x[0].shape[0] - 21
    rep = metrics.evaluate_frames(pred_x, gt_x, n_vertices,
                                  thresholds=(args.auc_lo, args.auc_hi))
    print(rep.table())
    out = Path(args.out)
    _atomic_write(out, lambda tmp: rep.to_json(tmp))
    report.write_metrics_csv(rep, out.with_suffix(".csv"))
    je = np.concatenate([metrics.point_errors_mm(p[n_vertices:], g[n_vertices:])
                         for p, g in zip(pred_x, gt_x)])
    ve = np.concatenate([metrics.point_errors_mm(p[:n_vertices], g[:n_vertices])
                         for p, g in zip(pred_x, gt_x)])
    report.save_pck_curves(je, ve, args.auc_lo, args.auc_hi, out.with_suffix(".pck.png"))
    return EXIT_OK


def cmd_verify(args):
    failures = verify.run_all(out=print)
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_VERIFY
    print("all checks passed")
    return EXIT_OK


def cmd_bps_export(args):
    bps = basis.generate_bps(args.m_pts, args.diameter, seed=_seed_of(args))
    _atomic_write(args.out, lambda tmp: basis.export_bps_csv(bps, tmp))
    print(f"wrote {len(bps)} basis points -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="poemkit",
                                 description="multi-view hand reconstruction toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (falls back to POEMKIT_SEED, then 0)")
        p.add_argument("--threads", type=int, default=1,
                       help="frame-level worker threads")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("gen", help="generate a synthetic multi-view dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-frames", type=int, required=True)
    p.add_argument("--config", default=None, help="model config JSON (sets channels, Q)")
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--radius", type=float, default=0.6)
    p.add_argument("--image", type=int, default=256)
    p.add_argument("--focal", type=float, default=300.0)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--rig-per-frame", action="store_true")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("reconstruct", help="run the two-stage model on a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--views", default=None,
                   help="'random' or comma-separated view order/subset")
    p.add_argument("--mirror", action="store_true",
                   help="left-hand path: mirror inputs, reconstruct, mirror back")
    p.add_argument("--use-gt-root", action="store_true")
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("train", help="train the reconstruction model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--schedule", choices=("cosine", "step", "const"), default="cosine")
    p.add_argument("--views", default=None, help="'random' enables view randomization")
    p.add_argument("--resume", default=None)
    p.add_argument("--deep-supervision", action="store_true",
                   help="supervise every decoder layer instead of the last")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("fit", help="iterative-optimization baseline on 2D keypoints")
    common(p)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--rig", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--n-vertices", type=int, default=77)
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--auc-lo", type=float, default=0.0)
    p.add_argument("--auc-hi", type=float, default=20.0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify", help="run the built-in oracle suite")
    common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bps-export", help="write the basis point cloud as CSV")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--m-pts", type=int, default=4096)
    p.add_argument("--diameter", type=float, default=0.20)
    p.set_defaults(fn=cmd_bps_export)

    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except geometry.DegenerateGeometryError as e:
        print(f"error: degenerate geometry: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
