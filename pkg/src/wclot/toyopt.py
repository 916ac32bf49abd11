"""Synthetic consistent frame pairs and first-order recovery by loss descent.

Stands in for network training at desk scale: generate a scene whose two
depth rasters are consistent by construction, perturb the pose and/or the
frame-B depths, and descend the consistency loss to recover them.

Scenes are surfaces in frame A; frame B's raster is produced by exact
ray-casting from the true pose. With the default identity true pose the two
rasters are bitwise equal, which is the regime the recovery demos and the
zero-loss consistency checks use.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from wclot.errors import InputDomainError
from wclot.geometry import (DepthMap, GridSampler, Intrinsics, SE3Transform,
                            perturb, rotation_angle)
from wclot.wcl import FramePair, WclConfig, loss, loss_grad

SCENE_KINDS = ("flat_plane", "tilted_plane", "two_boxes", "random_smooth")

_BISECT_STEPS = 100


@dataclass(frozen=True)
class SyntheticScene:
    depth_a: DepthMap
    depth_b: DepthMap
    intrinsics: Intrinsics
    t_true: SE3Transform
    kind: str
    seed: int

    def frame_pair(self, t_ab: SE3Transform | None = None,
                   depth_b: DepthMap | None = None) -> FramePair:
        return FramePair(self.depth_a, depth_b or self.depth_b, self.intrinsics,
                         t_ab or self.t_true)


@dataclass(frozen=True)
class Perturbation:
    """Initial error to recover from: pose tangent and/or relative depth noise."""

    pose_tangent: np.ndarray | None = None
    depth_noise: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.pose_tangent is not None:
            t = np.asarray(self.pose_tangent, dtype=np.float64).reshape(6)
            object.__setattr__(self, "pose_tangent", t)
        if not (0.0 <= self.depth_noise < 1.0):
            raise InputDomainError(f"depth_noise must be in [0, 1), got {self.depth_noise}")


def _default_wcl_config() -> WclConfig:
    return WclConfig(sampler=GridSampler(2, 2))


@dataclass(frozen=True)
class OptimizeConfig:
    steps: int = 500
    step_size: float = 0.1
    optimize: str = "pose_only"
    wcl: WclConfig = field(default_factory=_default_wcl_config)
    log_every: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise InputDomainError(f"steps must be >= 1, got {self.steps}")
        if not (self.step_size > 0):
            raise InputDomainError(f"step_size must be positive, got {self.step_size}")
        if self.optimize not in ("pose_only", "depth_only", "joint"):
            raise InputDomainError(
                f"optimize must be pose_only, depth_only or joint, got {self.optimize!r}")


@dataclass
class RecoveryResult:
    """Descent trace and final errors against the generating truth."""

    trace: np.ndarray  # columns: step, loss, pose_error_m, pose_error_rad, depth_rmse
    final_pose_error_m: float
    final_pose_error_rad: float
    final_depth_rmse: float
    success: bool
    message: str
    steps_run: int
    t_estimate: SE3Transform
    depth_b_estimate: DepthMap

    TRACE_COLUMNS = ("step", "loss", "pose_error_m", "pose_error_rad", "depth_rmse")


def scene_intrinsics(resolution: tuple[int, int]) -> Intrinsics:
    height, width = resolution
    return Intrinsics(fx=0.9 * width, fy=0.9 * width,
                      cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                      width=width, height=height)


def generate(kind: str, seed: int = 0, resolution: tuple[int, int] = (16, 16),
             t_true: SE3Transform | None = None) -> SyntheticScene:
    """Build a consistent frame pair for one of the stock scene kinds.

    ``t_true`` is the frame-A-to-frame-B map; None means identity, in which
    case frame B's raster is a bitwise copy. Non-identity poses re-render
    the frame-A surface by exact ray-casting and must stay small enough
    that every frame-B ray still hits the surface front-on.
    """
    if kind not in SCENE_KINDS:
        raise InputDomainError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")
    height, width = resolution
    if height < 8 or width < 8:
        raise InputDomainError(f"resolution must be at least 8x8, got {resolution}")
    intr = scene_intrinsics(resolution)
    rng = np.random.default_rng(seed)
    surface = _make_surface(kind, rng)

    identity = SE3Transform.identity()
    depth_a = DepthMap(_render(surface, intr, identity, kind), frame="A")
    if t_true is None:
        t_true = identity
        depth_b = DepthMap(depth_a.values.copy(), frame="B")
    else:
        depth_b = DepthMap(_render(surface, intr, t_true, kind), frame="B")
    return SyntheticScene(depth_a, depth_b, intr, t_true, kind, seed)


def _make_surface(kind: str, rng: np.random.Generator):
    z0 = 2.0
    if kind == "flat_plane":
        return {"kind": kind, "normal": np.array([0.0, 0.0, 1.0]), "offset": z0}
    if kind == "tilted_plane":
        tilt = rng.uniform(-0.2, 0.2, size=2)
        normal = np.array([tilt[0], tilt[1], 1.0])
        normal /= np.linalg.norm(normal)
        return {"kind": kind, "normal": normal, "offset": normal[2] * z0}
    if kind == "two_boxes":
        background = 2.5
        boxes = []
        for sign in (-1.0, 1.0):
            cx_ = sign * rng.uniform(0.35, 0.6)
            cy_ = rng.uniform(-0.3, 0.3)
            half = rng.uniform(0.15, 0.3, size=2)
            top = rng.uniform(1.6, 2.1)
            boxes.append({"x0": cx_ - half[0], "x1": cx_ + half[0],
                          "y0": cy_ - half[1], "y1": cy_ + half[1], "top": top})
        return {"kind": kind, "background": background, "boxes": boxes}
    # random_smooth: low-frequency cosine bumps on a plane
    waves = []
    for _ in range(3):
        waves.append({"amp": rng.uniform(0.02, 0.05),
                      "freq": rng.uniform(0.5, 1.5, size=2),
                      "phase": rng.uniform(0.0, 2 * np.pi)})
    return {"kind": kind, "z0": z0, "waves": waves}


def _render(surface, intr: Intrinsics, t_ab: SE3Transform, kind: str) -> np.ndarray:
    """Depth raster seen from the frame t_ab maps into.

    Rays go through every pixel of that frame; the returned value is the
    hit's z coordinate in that frame, which equals the ray parameter since
    directions are normalized to unit z.
    """
    t_ba = t_ab.inverse()
    center = t_ba.translation  # camera position in frame A
    jj, ii = np.meshgrid(np.arange(intr.height), np.arange(intr.width), indexing="ij")
    pixels = np.column_stack([ii.ravel(), jj.ravel()])
    dirs = intr.rays(pixels) @ t_ba.rotation.T  # per-pixel directions in frame A

    if surface["kind"] in ("flat_plane", "tilted_plane"):
        depths = _render_plane(surface, center, dirs)
    elif surface["kind"] == "two_boxes":
        depths = _render_boxes(surface, center, dirs)
    else:
        depths = _render_smooth(surface, center, dirs)
    return depths.reshape(intr.height, intr.width)


def _render_plane(surface, center, dirs) -> np.ndarray:
    normal, offset = surface["normal"], surface["offset"]
    denom = dirs @ normal
    if np.any(denom < 1e-6):
        raise InputDomainError("degenerate pose: a ray runs parallel to the plane")
    s = (offset - center @ normal) / denom
    if np.any(s <= 0):
        raise InputDomainError("degenerate pose: the plane lies behind the camera")
    return s


def _render_boxes(surface, center, dirs) -> np.ndarray:
    if np.any(dirs[:, 2] < 1e-6):
        raise InputDomainError("degenerate pose: a ray does not advance in depth")
    background = surface["background"]
    # parameterize each ray by world z; its lateral position is affine in z
    z_cam = center[2]
    if z_cam >= min(box["top"] for box in surface["boxes"]):
        raise InputDomainError("camera moved past a box top; scene self-occludes")
    hit_z = np.full(len(dirs), background)
    for box in surface["boxes"]:
        ztop = box["top"]
        # z-interval during which the ray's lateral track is inside the footprint
        z_in, z_out = _slab_interval(center, dirs, z_cam, box)
        inside_at_top = (z_in <= ztop) & (z_out >= ztop)
        wall = (~inside_at_top) & (z_in > ztop) & (z_in < background) & (z_in < z_out)
        cand = np.where(inside_at_top, ztop, np.where(wall, z_in, np.inf))
        hit_z = np.minimum(hit_z, cand)
    s = (hit_z - z_cam) / dirs[:, 2]
    if np.any(s <= 0):
        raise InputDomainError("degenerate pose: surface behind the camera")
    return s


def _slab_interval(center, dirs, z_cam, box):
    """[z_in, z_out] where each ray's lateral track lies in the box footprint."""
    z_in = np.full(len(dirs), -np.inf)
    z_out = np.full(len(dirs), np.inf)
    for axis, (lo, hi) in enumerate([(box["x0"], box["x1"]), (box["y0"], box["y1"])]):
        rate = dirs[:, axis] / dirs[:, 2]  # lateral movement per unit z
        pos0 = center[axis] - z_cam * rate  # lateral position extrapolated to z=0
        with np.errstate(divide="ignore", invalid="ignore"):
            za = (lo - pos0) / rate
            zb = (hi - pos0) / rate
        near = np.where(rate != 0, np.minimum(za, zb), np.where(
            (center[axis] >= lo) & (center[axis] <= hi), -np.inf, np.inf))
        far = np.where(rate != 0, np.maximum(za, zb), np.where(
            (center[axis] >= lo) & (center[axis] <= hi), np.inf, -np.inf))
        z_in = np.maximum(z_in, near)
        z_out = np.minimum(z_out, far)
    return z_in, z_out


def _render_smooth(surface, center, dirs) -> np.ndarray:
    if np.any(dirs[:, 2] < 1e-6):
        raise InputDomainError("degenerate pose: a ray does not advance in depth")
    z0, waves = surface["z0"], surface["waves"]
    # monotonicity margin: surface slope times lateral ray rate must stay < 1
    slope_bound = sum(w["amp"] * np.abs(w["freq"]).sum() for w in waves)
    lateral_rate = np.abs(dirs[:, :2] / dirs[:, 2:3]).sum(axis=1).max()
    if slope_bound * lateral_rate >= 0.9:
        raise InputDomainError("scene would self-occlude: surface too steep for this pose")

    def height(xy):
        h = np.full(len(xy), z0)
        for w in waves:
            h += w["amp"] * np.cos(xy @ w["freq"] + w["phase"])
        return h

    def residual(s):
        p = center[None, :] + s[:, None] * dirs
        return p[:, 2] - height(p[:, :2])

    lo = np.full(len(dirs), 1e-3)
    hi = np.full(len(dirs), (z0 + 1.0 - center[2]) / dirs[:, 2].min() + 1.0)
    if np.any(residual(lo) >= 0) or np.any(residual(hi) <= 0):
        raise InputDomainError("degenerate pose: surface not in front of the camera")
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        below = residual(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def recover(scene: SyntheticScene, perturbation: Perturbation,
            cfg: OptimizeConfig | None = None) -> RecoveryResult:
    """Gradient descent on the consistency loss from a perturbed start.

    Plain descent with backtracking (halve the step on increase, accept
    otherwise); per-block step sizes regrow after accepted steps. Declares
    divergence after 10 consecutive accepted increases.
    """
    cfg = cfg or OptimizeConfig()
    t_est = scene.t_true
    if perturbation.pose_tangent is not None:
        t_est = perturb(scene.t_true, perturbation.pose_tangent)
    depth_b = scene.depth_b.values.copy()
    if perturbation.depth_noise > 0:
        rng = np.random.default_rng(perturbation.noise_seed)
        depth_b = depth_b * (1.0 + perturbation.depth_noise * rng.uniform(-1, 1, depth_b.shape))

    do_pose = cfg.optimize in ("pose_only", "joint")
    do_depth = cfg.optimize in ("depth_only", "joint")

    def eval_loss(t, db):
        return loss(FramePair(scene.depth_a, DepthMap(db, frame="B"),
                              scene.intrinsics, t), cfg.wcl).loss

    def eval_grad(t, db):
        return loss_grad(FramePair(scene.depth_a, DepthMap(db, frame="B"),
                                   scene.intrinsics, t), cfg.wcl)

    def errors(t, db):
        pose_m = float(np.linalg.norm(t.translation - scene.t_true.translation))
        pose_rad = rotation_angle(t.rotation @ scene.t_true.rotation.T)
        rmse = float(np.sqrt(np.mean((db - scene.depth_b.values) ** 2)))
        return pose_m, pose_rad, rmse

    alpha_pose = cfg.step_size
    alpha_depth = cfg.step_size
    res = eval_grad(t_est, depth_b)
    cur = res.loss
    trace = [(0, cur, *errors(t_est, depth_b))]
    increases = 0
    steps_run = 0
    success, message = True, "step budget exhausted"

    for step in range(1, cfg.steps + 1):
        grads = res.grads
        g_pose = grads.d_pose_ab if do_pose else np.zeros(6)
        g_depth = np.zeros_like(depth_b)
        if do_depth:
            px = grads.pixels_b
            g_depth[px[:, 1], px[:, 0]] = grads.d_depth_b
        if max(np.abs(g_pose).max(), np.abs(g_depth).max()) < 1e-14:
            message = "converged: gradient vanished"
            break

        a_p, a_d = alpha_pose, alpha_depth
        new = np.inf
        accepted = False
        for _ in range(40):
            t_new = perturb(t_est, -a_p * g_pose) if do_pose else t_est
            d_new = depth_b - a_d * g_depth if do_depth else depth_b
            if not do_depth or d_new.min() > 0:
                new = eval_loss(t_new, d_new)
                if new <= cur:
                    accepted = True
                    break
            a_p *= 0.5
            a_d *= 0.5
        if not accepted and not np.isfinite(new):
            success, message = False, "line search could not produce a feasible step"
            break
        if not accepted and new >= cur and new - cur <= 1e-15 * (1.0 + abs(cur)):
            message = "converged: line search stalled"
            break

        t_est, depth_b = t_new, d_new
        steps_run = step
        increases = increases + 1 if new > cur else 0
        cur = new
        trace.append((step, cur, *errors(t_est, depth_b)))
        if cfg.log_every and step % cfg.log_every == 0:
            print(f"step {step}: loss {cur:.6e}", file=sys.stderr, flush=True)
        if increases >= 10:
            success, message = False, "diverged: loss increased for 10 consecutive steps"
            break
        # regrow accepted step sizes so flat directions are not starved
        alpha_pose = min(a_p * 2.0, cfg.step_size * 2.0**30)
        alpha_depth = min(a_d * 2.0, cfg.step_size * 2.0**30)
        res = eval_grad(t_est, depth_b)
        cur = res.loss

    pose_m, pose_rad, rmse = errors(t_est, depth_b)
    return RecoveryResult(np.array(trace), pose_m, pose_rad, rmse, success, message,
                          steps_run, t_est, DepthMap(depth_b, frame="B"))
