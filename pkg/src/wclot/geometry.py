"""Camera model, depth back-projection, rigid transforms, and grid sampling.

Pixel convention: a pixel is an ``(i, j)`` pair with ``i`` the column index
(u axis, paired with fx/cx) and ``j`` the row index (v axis, paired with
fy/cy). Samples are taken at integer pixel coordinates, no half-pixel
offset. All operations are pure functions; the types are immutable after
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wclot.errors import InputDomainError

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputDomainError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputDomainError(
                f"principal point ({self.cx}, {self.cy}) outside raster {self.width}x{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    def rays(self, pixels: np.ndarray) -> np.ndarray:
        """K^-1 [i, j, 1]^T for an (N, 2) array of (i, j) pixels."""
        pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        return np.column_stack([(pixels[:, 0] - self.cx) / self.fx,
                                (pixels[:, 1] - self.cy) / self.fy,
                                np.ones(len(pixels))])


@dataclass(frozen=True)
class DepthMap:
    """Positive depth raster plus an optional validity mask.

    Values must be finite everywhere and strictly positive at valid pixels;
    missing depth is encoded only through the mask, never as 0 or NaN.
    """

    values: np.ndarray
    mask: np.ndarray | None = None
    frame: str = "A"

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InputDomainError(f"depth raster must be 2-D, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise InputDomainError("depth raster contains non-finite values")
        object.__setattr__(self, "values", values)
        if self.mask is not None:
            mask = np.ascontiguousarray(self.mask).astype(bool)
            if mask.shape != values.shape:
                raise InputDomainError(
                    f"mask shape {mask.shape} does not match raster shape {values.shape}")
            object.__setattr__(self, "mask", mask)
        bad = (values <= 0) if self.mask is None else (values <= 0) & self.mask
        if bad.any():
            j, i = np.argwhere(bad)[0]
            raise InputDomainError(
                f"non-positive depth {values[j, i]} at valid pixel ({i}, {j})")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_at(self, pixels: np.ndarray) -> np.ndarray:
        """Boolean validity of each (i, j) pixel (column, row)."""
        pixels = np.asarray(pixels).reshape(-1, 2)
        if self.mask is None:
            return np.ones(len(pixels), dtype=bool)
        return self.mask[pixels[:, 1], pixels[:, 0]]


@dataclass(frozen=True)
class SE3Transform:
    """Rigid transform p -> R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.ascontiguousarray(self.rotation, dtype=np.float64)
        tr = np.ascontiguousarray(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise InputDomainError(f"rotation must be 3x3, got {rot.shape}")
        if np.abs(rot.T @ rot - np.eye(3)).max() > _ORTHO_TOL:
            raise InputDomainError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise InputDomainError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "SE3Transform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "SE3Transform":
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape not in ((3, 4), (4, 4)):
            raise InputDomainError(f"pose matrix must be 3x4 or 4x4, got {mat.shape}")
        return cls(mat[:3, :3], mat[:3, 3])

    def as_matrix(self) -> np.ndarray:
        """Row-major 3x4 [R | t]."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "SE3Transform") -> "SE3Transform":
        """self after other: (self @ other)(p) = self(other(p))."""
        return SE3Transform(self.rotation @ other.rotation,
                            self.rotation @ other.translation + self.translation)

    def inverse(self) -> "SE3Transform":
        return SE3Transform(self.rotation.T, -self.rotation.T @ self.translation)


def invert(transform: SE3Transform) -> SE3Transform:
    """Inverse rigid transform: compose(invert(T), T) = identity."""
    return transform.inverse()


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rotation matrix for a rotation vector (Rodrigues)."""
    omega = np.asarray(omega, dtype=np.float64).reshape(3)
    angle = np.linalg.norm(omega)
    k = _skew(omega)
    if angle < 1e-12:
        # second-order series keeps orthonormality within validation tolerance
        return np.eye(3) + k + 0.5 * (k @ k)
    return np.eye(3) + (np.sin(angle) / angle) * k + ((1 - np.cos(angle)) / angle**2) * (k @ k)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def perturb(transform: SE3Transform, tangent: np.ndarray) -> SE3Transform:
    """Left-multiplied perturbation of a pose by a 6-vector tangent.

    The tangent is (wx, wy, wz, tx, ty, tz): rotation vector first, then
    translation. The chart is Perturb(d) = (exp([w]x), t) applied on the
    left, so gradients reported in this convention pair with
    ``perturb(T, -step * grad)`` updates.
    """
    tangent = np.asarray(tangent, dtype=np.float64).reshape(6)
    delta = SE3Transform(so3_exp(tangent[:3]), tangent[3:])
    return delta.compose(transform)


def rotation_angle(rotation: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in radians."""
    c = (np.trace(rotation) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3-D points tagged with the frame they live in.

    Point k corresponds to sample pixel k for the life of the cloud.
    """

    points: np.ndarray
    frame: str

    def __post_init__(self):
        points = np.ascontiguousarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise InputDomainError(f"points must be (N, 3), got {points.shape}")
        if not np.isfinite(points).all():
            raise InputDomainError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GridSampler:
    """Regular pixel grid with stride (n_c, n_r) and offset (m_c, m_r).

    n_c strides columns, n_r strides rows. Offsets live in the half-open
    residue ranges [0, n_c) x [0, n_r); passing a seed draws them uniformly
    from those ranges.
    """

    n_c: int = 16
    n_r: int = 4
    m_c: int = 0
    m_r: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.n_c < 1 or self.n_r < 1:
            raise InputDomainError(f"grid strides must be >= 1, got ({self.n_c}, {self.n_r})")
        if self.seed is not None:
            rng = np.random.default_rng(self.seed)
            object.__setattr__(self, "m_c", int(rng.integers(0, self.n_c)))
            object.__setattr__(self, "m_r", int(rng.integers(0, self.n_r)))
        if not (0 <= self.m_c < self.n_c and 0 <= self.m_r < self.n_r):
            raise InputDomainError(
                f"offsets ({self.m_c}, {self.m_r}) outside [0, {self.n_c}) x [0, {self.n_r})")


def grid_sample(sampler: GridSampler, width: int, height: int) -> np.ndarray:
    """All pixels (m_c + a*n_c, m_r + b*n_r) in bounds, row-major.

    Returns an (N, 2) int array of (i, j) = (column, row) pairs.
    """
    if width <= 0 or height <= 0:
        raise InputDomainError(f"degenerate raster {width}x{height}")
    if width < sampler.n_c or height < sampler.n_r:
        raise InputDomainError(
            f"raster {width}x{height} smaller than grid stride ({sampler.n_c}, {sampler.n_r})")
    cols = np.arange(sampler.m_c, width, sampler.n_c)
    rows = np.arange(sampler.m_r, height, sampler.n_r)
    jj, ii = np.meshgrid(rows, cols, indexing="ij")
    return np.column_stack([ii.ravel(), jj.ravel()])


def back_project(depth: DepthMap, intrinsics: Intrinsics, pixels: np.ndarray) -> PointCloud:
    """Lift pixels to 3-D: point_k = depth[j_k, i_k] * K^-1 [i_k, j_k, 1]^T.

    The cloud lands in the depth map's frame, one point per pixel in input
    order.
    """
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if len(pixels) == 0:
        raise InputDomainError("no pixels to back-project")
    i, j = pixels[:, 0], pixels[:, 1]
    oob = (i < 0) | (i >= depth.width) | (j < 0) | (j >= depth.height)
    if oob.any():
        k = int(np.flatnonzero(oob)[0])
        raise InputDomainError(
            f"pixel ({i[k]}, {j[k]}) outside raster {depth.width}x{depth.height}")
    invalid = ~depth.valid_at(pixels)
    if invalid.any():
        k = int(np.flatnonzero(invalid)[0])
        raise InputDomainError(f"depth invalid at requested pixel ({i[k]}, {j[k]})")
    d = depth.values[j, i]
    return PointCloud(d[:, None] * intrinsics.rays(pixels), depth.frame)


def transform(cloud: PointCloud, t: SE3Transform, target_frame: str) -> PointCloud:
    """Apply a rigid transform to every point; order preserved."""
    if len(cloud) == 0:
        raise InputDomainError("cannot transform an empty cloud")
    return PointCloud(t.apply(cloud.points), target_frame)


def project(points: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Perspective projection K p / z back to (i, j) pixel coordinates."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    if np.any(z <= 0):
        raise InputDomainError("cannot project points with non-positive depth")
    return np.column_stack([intrinsics.fx * points[:, 0] / z + intrinsics.cx,
                            intrinsics.fy * points[:, 1] / z + intrinsics.cy])
