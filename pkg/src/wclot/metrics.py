"""Depth-evaluation metric suite and the snippet-based trajectory error.

Depth metrics follow the standard monocular protocol: errors over valid
ground-truth pixels inside a depth cap, optionally after median scaling of
the prediction. Trajectory error is evaluated over overlapping windows of
consecutive frames, each re-anchored to its first frame and scale-aligned
by least squares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wclot.errors import InputDomainError
from wclot.geometry import DepthMap, SE3Transform

CSV_HEADER = "abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3"


@dataclass(frozen=True)
class DepthEvalConfig:
    max_depth: float = 80.0
    min_depth: float = 1e-3
    median_scaling: bool = True

    def __post_init__(self):
        if not (0 < self.min_depth < self.max_depth):
            raise InputDomainError(
                f"need 0 < min_depth < max_depth, got {self.min_depth}, {self.max_depth}")


@dataclass(frozen=True)
class MetricReport:
    """The seven depth metrics plus the pixel count they were computed over."""

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    a1: float
    a2: float
    a3: float
    n_pixels: int

    def to_dict(self) -> dict:
        return {"abs_rel": self.abs_rel, "sq_rel": self.sq_rel, "rmse": self.rmse,
                "rmse_log": self.rmse_log, "a1": self.a1, "a2": self.a2,
                "a3": self.a3, "n_pixels": self.n_pixels}

    def to_csv_line(self) -> str:
        """One line in Table-1 column order (see CSV_HEADER)."""
        return ",".join(f"{v:.6f}" for v in
                        (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
                         self.a1, self.a2, self.a3))


@dataclass(frozen=True)
class Trajectory:
    """World-from-camera poses, timestamps implicit by index."""

    poses: tuple[SE3Transform, ...]

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise InputDomainError("trajectory must be nonempty")
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.poses)


def depth_metrics(gt: DepthMap, pred: DepthMap, cfg: DepthEvalConfig | None = None,
                  ) -> MetricReport:
    """Evaluate a predicted raster against ground truth.

    Pixels count when the gt mask marks them valid and gt depth lies in
    [min_depth, max_depth]. With median scaling (default on), pred is
    multiplied by median(gt)/median(pred) over those pixels first.
    """
    cfg = cfg or DepthEvalConfig()
    if gt.values.shape != pred.values.shape:
        raise InputDomainError(
            f"raster shapes differ: gt {gt.values.shape} vs pred {pred.values.shape}")
    valid = np.ones(gt.values.shape, dtype=bool) if gt.mask is None else gt.mask.copy()
    valid &= (gt.values >= cfg.min_depth) & (gt.values <= cfg.max_depth)
    if pred.mask is not None:
        valid &= pred.mask
    if not valid.any():
        raise InputDomainError("no valid pixels after masking and depth capping")

    nonpos = valid & (pred.values <= 0)
    if nonpos.any():
        j, i = np.argwhere(nonpos)[0]
        raise InputDomainError(f"non-positive predicted depth at pixel ({i}, {j})")

    g = gt.values[valid]
    p = pred.values[valid]
    if cfg.median_scaling:
        p = p * (np.median(g) / np.median(p))

    diff = g - p
    abs_rel = float(np.mean(np.abs(diff) / g))
    sq_rel = float(np.mean(diff**2 / g))
    rmse = float(np.sqrt(np.mean(diff**2)))
    rmse_log = float(np.sqrt(np.mean((np.log(g) - np.log(p))**2)))
    ratio = np.maximum(g / p, p / g)
    a1 = float(np.mean(ratio < 1.25))
    a2 = float(np.mean(ratio < 1.25**2))
    a3 = float(np.mean(ratio < 1.25**3))
    return MetricReport(abs_rel, sq_rel, rmse, rmse_log, a1, a2, a3, int(valid.sum()))


@dataclass(frozen=True)
class AteResult:
    mean: float
    std: float
    n_snippets: int

    def to_dict(self) -> dict:
        return {"ate_mean": self.mean, "ate_std": self.std, "n_snippets": self.n_snippets}


def ate(gt: Trajectory, pred: Trajectory, snippet: int = 5) -> AteResult:
    """Absolute trajectory error over overlapping fixed-length windows.

    Each window is re-anchored to its first frame; a scalar scale minimizing
    sum ||s t_pred - t_gt||^2 is applied to the predicted translations
    (s = 1 when the denominator vanishes); the window's error is the RMS
    translation residual. Returns mean and population standard deviation
    over windows.
    """
    if len(gt) != len(pred):
        raise InputDomainError(f"trajectory lengths differ: {len(gt)} vs {len(pred)}")
    if snippet < 2:
        raise InputDomainError(f"snippet must be >= 2, got {snippet}")
    if len(gt) < snippet:
        raise InputDomainError(f"trajectory shorter than snippet: {len(gt)} < {snippet}")

    errors = []
    for start in range(len(gt) - snippet + 1):
        t_gt = _anchored_translations(gt.poses[start:start + snippet])
        t_pred = _anchored_translations(pred.poses[start:start + snippet])
        denom = float(np.sum(t_pred * t_pred))
        scale = float(np.sum(t_gt * t_pred)) / denom if denom > 0 else 1.0
        residual = scale * t_pred - t_gt
        errors.append(float(np.sqrt(np.mean(np.sum(residual**2, axis=1)))))
    errors = np.asarray(errors)
    return AteResult(float(errors.mean()), float(errors.std()), len(errors))


def _anchored_translations(window) -> np.ndarray:
    first_inv = window[0].inverse()
    return np.array([first_inv.compose(p).translation for p in window])
