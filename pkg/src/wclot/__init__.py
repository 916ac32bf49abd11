"""Geometric consistency loss for depth-derived point clouds.

Back-projects depth rasters into 3-D, scores cross-frame consistency with
an entropy-regularized transport distance, and differentiates the loss
exactly through the unrolled scaling iteration. Includes the standard
depth/pose evaluation metrics and a synthetic recovery demo.
"""

from wclot._kernels import BACKEND as KERNEL_BACKEND
from wclot.errors import (CapacityError, InputDomainError,
                          NumericalDegeneracyError, WclotError)
from wclot.geometry import (DepthMap, GridSampler, Intrinsics, PointCloud,
                            SE3Transform, back_project, grid_sample, invert,
                            perturb, transform)
from wclot.metrics import (AteResult, DepthEvalConfig, MetricReport,
                           Trajectory, ate, depth_metrics)
from wclot.sinkhorn import (CostMatrix, SinkhornConfig, SinkhornState,
                            TransportPlan, cost_matrix, entropy,
                            exact_ot_oracle, solve, solve_log)
from wclot.toyopt import (OptimizeConfig, Perturbation, RecoveryResult,
                          SyntheticScene, generate, recover)
from wclot.wcl import (FramePair, GradientBundle, WclConfig, WclResult,
                       build_clouds, loss, loss_grad)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "WclotError", "InputDomainError",
    "NumericalDegeneracyError", "CapacityError",
    "Intrinsics", "DepthMap", "SE3Transform", "PointCloud", "GridSampler",
    "back_project", "transform", "invert", "grid_sample", "perturb",
    "CostMatrix", "TransportPlan", "SinkhornConfig", "SinkhornState",
    "cost_matrix", "solve", "solve_log", "entropy", "exact_ot_oracle",
    "FramePair", "WclConfig", "WclResult", "GradientBundle",
    "build_clouds", "loss", "loss_grad",
    "DepthEvalConfig", "MetricReport", "Trajectory", "AteResult",
    "depth_metrics", "ate",
    "SyntheticScene", "Perturbation", "OptimizeConfig", "RecoveryResult",
    "generate", "recover",
    "__version__",
]
