"""Thin array bridge to the wclot consistency loss.

Three hot entry points for training loops: the regularized transport
distance between two clouds, and the consistency loss value with or
without gradients. Inputs are standard buffer-protocol arrays (float32 or
float64); contiguous float64 inputs are used without copying, anything
else is converted once. Outputs are plain floats and float64 arrays. The
wrappers hold no state, and the compiled core releases the GIL during the
scaling iteration.
"""

from __future__ import annotations

import numpy as np

from wclot import (DepthMap, FramePair, GridSampler, Intrinsics,
                   SE3Transform, SinkhornConfig, WclConfig, cost_matrix,
                   loss, loss_grad, solve_log)

__version__ = "0.1.0"

__all__ = ["py_sinkhorn", "py_wcl"]


def _as_float64(array, name, shape_desc, check):
    out = np.asarray(array)
    if out.dtype not in (np.float32, np.float64):
        raise TypeError(f"{name} must be float32 or float64, got {out.dtype}")
    if not check(out.shape):
        raise ValueError(f"{name} must have shape {shape_desc}, got {out.shape}")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(out, dtype=np.float64)


def py_sinkhorn(x, y, eps: float = 1e-3, iters: int = 100):
    """Regularized transport distance between an (m, 3) and an (n, 3) cloud.

    Returns ``(distance, plan)`` where plan is the (m, n) coupling. Matches
    the core log-domain solver exactly (it is the same code path).
    """
    xp = _as_float64(x, "X", "(m, 3)", lambda s: len(s) == 2 and s[1] == 3 and s[0] >= 1)
    yp = _as_float64(y, "Y", "(n, 3)", lambda s: len(s) == 2 and s[1] == 3 and s[0] >= 1)
    plan, distance, _ = solve_log(cost_matrix(xp, yp),
                                  SinkhornConfig(epsilon=eps, max_iters=iters))
    return float(distance), plan.entries


def py_wcl(depth_a, depth_b, intrinsics, pose, nc: int = 16, nr: int = 4,
           eps: float = 1e-3, want_grad: bool = False):
    """Consistency loss between two (H, W) depth rasters.

    ``intrinsics`` is (fx, fy, cx, cy); ``pose`` is the row-major 3x4
    [R | t] mapping frame-A coordinates into frame B (the reverse transform
    is derived). Returns ``(loss, None)`` or, with ``want_grad``,
    ``(loss, grads)`` where grads has full-raster ``depth_a``/``depth_b``
    gradient arrays (zero off the sampling grid) and a 6-vector ``pose``
    tangent gradient (wx, wy, wz, tx, ty, tz).
    """
    da = _as_float64(depth_a, "depth_a", "(H, W)", lambda s: len(s) == 2)
    db = _as_float64(depth_b, "depth_b", "(H, W)", lambda s: len(s) == 2)
    if da.shape != db.shape:
        raise ValueError(f"depth rasters disagree: {da.shape} vs {db.shape}")
    k = np.asarray(intrinsics, dtype=np.float64).reshape(-1)
    if k.shape != (4,):
        raise ValueError(f"intrinsics must be 4 floats (fx, fy, cx, cy), got shape {k.shape}")
    p = _as_float64(pose, "pose", "(3, 4)", lambda s: s == (3, 4))

    height, width = da.shape
    pair = FramePair(DepthMap(da, frame="A"), DepthMap(db, frame="B"),
                     Intrinsics(fx=k[0], fy=k[1], cx=k[2], cy=k[3],
                                width=width, height=height),
                     SE3Transform.from_matrix(p))
    cfg = WclConfig(sinkhorn=SinkhornConfig(epsilon=eps),
                    sampler=GridSampler(nc, nr))
    if not want_grad:
        return float(loss(pair, cfg).loss), None

    result = loss_grad(pair, cfg)
    bundle = result.grads
    g_a = np.zeros_like(da)
    g_b = np.zeros_like(db)
    g_a[bundle.pixels_a[:, 1], bundle.pixels_a[:, 0]] = bundle.d_depth_a
    g_b[bundle.pixels_b[:, 1], bundle.pixels_b[:, 0]] = bundle.d_depth_b
    grads = {"depth_a": g_a, "depth_b": g_b, "pose": bundle.d_pose_ab.copy()}
    return float(result.loss), grads
