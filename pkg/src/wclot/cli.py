"""Command-line interface: one binary, subcommand per operation.

stdout carries machine-readable JSON, stderr carries diagnostics. Exit
codes: 0 success, 1 input-domain error (including bad flags), 2 numerical
degeneracy, 3 capacity overflow.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from wclot import io, metrics, toyopt
from wclot import sinkhorn as sk
from wclot import wcl
from wclot.errors import InputDomainError, WclotError
from wclot.geometry import (DepthMap, GridSampler, Intrinsics, SE3Transform,
                            perturb, so3_exp)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wclot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sinkhorn", help="regularized transport distance between two clouds")
    p.add_argument("cloud_a", help="xyz file, one 'x y z' per line")
    p.add_argument("cloud_b")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--mode", choices=["naive", "log_domain"], default="log_domain")
    p.add_argument("--plan-out", help="write the coupling as CSV")
    p.set_defaults(func=_cmd_sinkhorn)

    p = sub.add_parser("wcl", help="consistency loss between two depth frames")
    p.add_argument("depth_a", help="PFM depth raster for frame A")
    p.add_argument("depth_b")
    p.add_argument("intrinsics", help="key = value text file")
    p.add_argument("pose_ab", help="KITTI-format pose file (first line used)")
    p.add_argument("--nc", type=int, default=16)
    p.add_argument("--nr", type=int, default=4)
    p.add_argument("--offset-seed", type=int, default=None,
                   help="draw grid offsets from this seed (default offsets 0,0)")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--grad", choices=["none", "fixed", "unrolled"], default="none")
    p.add_argument("--grad-out", help="write the gradient bundle as CSV")
    p.set_defaults(func=_cmd_wcl)

    p = sub.add_parser("eval-depth", help="depth metric suite over matching files")
    p.add_argument("gt_dir")
    p.add_argument("pred_dir")
    p.add_argument("--max-depth", type=float, default=80.0)
    p.add_argument("--min-depth", type=float, default=1e-3)
    p.add_argument("--no-median-scaling", action="store_true")
    p.add_argument("--csv-out", help="write the aggregate one-line CSV report")
    p.set_defaults(func=_cmd_eval_depth)

    p = sub.add_parser("eval-pose", help="snippet ATE between two KITTI pose files")
    p.add_argument("gt_file")
    p.add_argument("pred_file")
    p.add_argument("--snippet", type=int, default=5)
    p.set_defaults(func=_cmd_eval_pose)

    p = sub.add_parser("demo", help="synthetic scene recovery by loss descent")
    p.add_argument("--scene", choices=list(toyopt.SCENE_KINDS), default="flat_plane")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb-tz", type=float, default=0.3,
                   help="initial translation error along z, meters")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--optimize", choices=["pose_only", "depth_only", "joint"],
                   default="pose_only")
    p.add_argument("--depth-noise", type=float, default=0.0)
    p.add_argument("--trace-out", help="write the per-step trace as CSV")
    p.add_argument("--emit-files", metavar="DIR",
                   help="write the scene + perturbed pose as files for the wcl command")
    p.set_defaults(func=_cmd_demo)

    p = sub.add_parser("grad-check", help="compare gradients against central differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=36, help="points per cloud (max 64)")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--grad", choices=["unrolled", "fixed"], default="unrolled")
    p.set_defaults(func=_cmd_grad_check)

    return parser


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout)
    sys.stdout.write("\n")


def _cmd_sinkhorn(args) -> int:
    cloud_a = io.read_xyz(args.cloud_a, frame="A")
    cloud_b = io.read_xyz(args.cloud_b, frame="B")
    cfg = sk.SinkhornConfig(epsilon=args.eps, max_iters=args.iters, tol=args.tol,
                            mode=args.mode)
    plan, distance, state = sk.solve(sk.cost_matrix(cloud_a, cloud_b), cfg)
    if args.plan_out:
        io.write_matrix_csv(args.plan_out, plan.entries)
    _emit({"distance": distance, "iters_run": state.iters_run,
           "marginal_violation": state.marginal_violation})
    return 0


def _sampler_from_args(args) -> GridSampler:
    if args.offset_seed is not None:
        return GridSampler(args.nc, args.nr, seed=args.offset_seed)
    return GridSampler(args.nc, args.nr)


def _cmd_wcl(args) -> int:
    pair = wcl.FramePair(io.load_depth(args.depth_a, frame="A"),
                         io.load_depth(args.depth_b, frame="B"),
                         io.read_intrinsics(args.intrinsics),
                         io.read_kitti_poses(args.pose_ab).poses[0])
    cfg = wcl.WclConfig(sinkhorn=sk.SinkhornConfig(epsilon=args.eps, max_iters=args.iters),
                        sampler=_sampler_from_args(args),
                        grad_mode="fixed_plan" if args.grad == "fixed" else "unrolled")
    if args.grad == "none":
        result = wcl.loss(pair, cfg)
    else:
        result = wcl.loss_grad(pair, cfg)
        if args.grad_out:
            io.write_gradient_csv(args.grad_out, result.grads)
        for warning in result.grads.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    _emit({"loss": result.loss, "term_a": result.term_a, "term_b": result.term_b,
           "points_a": result.points_a, "points_b": result.points_b})
    return 0


def _cmd_eval_depth(args) -> int:
    gt_dir, pred_dir = Path(args.gt_dir), Path(args.pred_dir)
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.pfm"))
                if not p.name.endswith(".mask.pfm")}
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.pfm"))
                  if not p.name.endswith(".mask.pfm")}
    unmatched = sorted(set(gt_files) ^ set(pred_files))
    if unmatched:
        raise InputDomainError(f"unmatched depth files: {unmatched}")
    if not gt_files:
        raise InputDomainError("no matching .pfm files in the two directories")

    cfg = metrics.DepthEvalConfig(max_depth=args.max_depth, min_depth=args.min_depth,
                                  median_scaling=not args.no_median_scaling)
    per_file = {}
    for name in sorted(gt_files):
        report = metrics.depth_metrics(io.load_depth(gt_files[name]),
                                       io.load_depth(pred_files[name]), cfg)
        per_file[name] = report.to_dict()
    fields = ("abs_rel", "sq_rel", "rmse", "rmse_log", "a1", "a2", "a3")
    aggregate = {k: float(np.mean([r[k] for r in per_file.values()])) for k in fields}
    aggregate["n_pixels"] = int(sum(r["n_pixels"] for r in per_file.values()))
    if args.csv_out:
        agg_report = metrics.MetricReport(**aggregate)
        Path(args.csv_out).write_text(
            metrics.CSV_HEADER + "\n" + agg_report.to_csv_line() + "\n")
    _emit({"per_file": per_file, "aggregate": aggregate, "n_files": len(per_file)})
    return 0


def _cmd_eval_pose(args) -> int:
    gt = io.read_kitti_poses(args.gt_file)
    pred = io.read_kitti_poses(args.pred_file)
    result = metrics.ate(gt, pred, snippet=args.snippet)
    _emit(result.to_dict())
    return 0


def _cmd_demo(args) -> int:
    scene = toyopt.generate(args.scene, seed=args.seed,
                            resolution=(args.resolution, args.resolution))
    tangent = np.zeros(6)
    tangent[5] = args.perturb_tz
    perturbation = toyopt.Perturbation(
        pose_tangent=tangent if args.optimize != "depth_only" else None,
        depth_noise=args.depth_noise, noise_seed=args.seed)
    cfg = toyopt.OptimizeConfig(steps=args.steps, optimize=args.optimize)

    if args.emit_files:
        out = Path(args.emit_files)
        out.mkdir(parents=True, exist_ok=True)
        io.save_depth(out / "depth_a.pfm", scene.depth_a)
        io.save_depth(out / "depth_b.pfm", scene.depth_b)
        io.write_intrinsics(out / "intrinsics.txt", scene.intrinsics)
        start_pose = perturb(scene.t_true, tangent) \
            if perturbation.pose_tangent is not None else scene.t_true
        io.write_kitti_poses(out / "pose_ab.txt", [start_pose])
        io.write_kitti_poses(out / "pose_true.txt", [scene.t_true])

    result = toyopt.recover(scene, perturbation, cfg)
    if args.trace_out:
        io.write_trace_csv(args.trace_out, result.trace)
    _emit({"success": result.success, "message": result.message,
           "steps_run": result.steps_run,
           "initial_loss": float(result.trace[0, 1]),
           "final_loss": float(result.trace[-1, 1]),
           "final_pose_error_m": result.final_pose_error_m,
           "final_pose_error_rad": result.final_pose_error_rad,
           "final_depth_rmse": result.final_depth_rmse})
    return 0


def grad_check_pair(seed: int, size: int) -> wcl.FramePair:
    """Deterministic near-consistent frame pair used by grad-check.

    Depths 2.0 + U(0, 0.1) with a small random pose keep every coupling
    sharply resolved, so the solver converges and fixed-plan gradients are
    meaningful; the unrolled comparison is exact regardless.
    """
    if size > 64:
        raise InputDomainError(f"grad-check supports at most 64 points per cloud, got {size}")
    side = max(2, int(np.sqrt(size)))
    rng = np.random.default_rng(seed)
    intr = Intrinsics(fx=0.9 * side, fy=0.9 * side, cx=(side - 1) / 2, cy=(side - 1) / 2,
                      width=side, height=side)
    depth_a = DepthMap(2.0 + 0.1 * rng.random((side, side)), frame="A")
    depth_b = DepthMap(2.0 + 0.1 * rng.random((side, side)), frame="B")
    t_ab = SE3Transform(so3_exp(0.01 * rng.standard_normal(3)),
                        0.03 * rng.standard_normal(3))
    return wcl.FramePair(depth_a, depth_b, intr, t_ab)


def _cmd_grad_check(args) -> int:
    pair = grad_check_pair(args.seed, args.size)
    cfg = wcl.WclConfig(
        sinkhorn=sk.SinkhornConfig(epsilon=args.eps, max_iters=1000, tol=1e-12),
        sampler=GridSampler(1, 1),
        grad_mode="fixed_plan" if args.grad == "fixed" else "unrolled")
    result = wcl.loss_grad(pair, cfg)
    grads = result.grads

    h = args.fd_step

    def loss_at(depth_a, depth_b, t_ab):
        pair_h = wcl.FramePair(depth_a, depth_b, pair.intrinsics, t_ab)
        return wcl.loss(pair_h, cfg).loss

    analytic = np.concatenate([grads.d_depth_a, grads.d_depth_b, grads.d_pose_ab])
    names = ([f"depth_a[{k}]" for k in range(len(grads.d_depth_a))]
             + [f"depth_b[{k}]" for k in range(len(grads.d_depth_b))]
             + [f"pose_ab[{k}]" for k in range(6)])
    fd = np.empty_like(analytic)
    idx = 0
    for pixels, depth, other, is_a in ((grads.pixels_a, pair.depth_a, pair.depth_b, True),
                                       (grads.pixels_b, pair.depth_b, pair.depth_a, False)):
        for i, j in pixels:
            plus, minus = depth.values.copy(), depth.values.copy()
            plus[j, i] += h
            minus[j, i] -= h
            if is_a:
                lp = loss_at(DepthMap(plus, frame="A"), other, pair.t_ab)
                lm = loss_at(DepthMap(minus, frame="A"), other, pair.t_ab)
            else:
                lp = loss_at(other, DepthMap(plus, frame="B"), pair.t_ab)
                lm = loss_at(other, DepthMap(minus, frame="B"), pair.t_ab)
            fd[idx] = (lp - lm) / (2 * h)
            idx += 1
    for axis in range(6):
        e = np.zeros(6)
        e[axis] = h
        lp = loss_at(pair.depth_a, pair.depth_b, perturb(pair.t_ab, e))
        lm = loss_at(pair.depth_a, pair.depth_b, perturb(pair.t_ab, -e))
        fd[idx] = (lp - lm) / (2 * h)
        idx += 1

    scale = max(np.abs(analytic).max(), np.abs(fd).max(), 1e-12)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-6 * scale)
    rel = np.abs(analytic - fd) / denom
    worst = int(np.argmax(rel))
    _emit({"max_rel_err": float(rel[worst]), "worst_coordinate": names[worst],
           "n_coordinates": len(rel), "grad_mode": args.grad,
           "points_a": result.points_a, "points_b": result.points_b})
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for
        # numerical degeneracy here, so remap bad usage to input-domain
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except WclotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
