"""File formats: PFM depth rasters, intrinsics text, xyz clouds, KITTI poses.

PFM rasters are grayscale ("Pf"), little-endian float32 with scale -1.0,
rows stored bottom-up per the format convention. A depth file foo.pfm may
have a sibling validity raster foo.mask.pfm (0 = invalid, 1 = valid).
Cloud and matrix text formats use repr-precision floats so values
round-trip bitwise.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from wclot.errors import InputDomainError
from wclot.geometry import DepthMap, Intrinsics, PointCloud, SE3Transform
from wclot.metrics import Trajectory

_INTRINSICS_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a float64 (H, W) array, top row first."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise InputDomainError(f"{path}: not a grayscale PFM (header {header!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise InputDomainError(f"{path}: malformed PFM dimensions line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        endian = "<" if scale < 0 else ">"
        count = width * height
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise InputDomainError(f"{path}: truncated PFM payload")
        data = np.frombuffer(raw, dtype=endian + "f4").astype(np.float64)
    # PFM stores rows bottom-up
    return data.reshape(height, width)[::-1].copy()


def write_pfm(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise InputDomainError(f"PFM payload must be 2-D, got shape {values.shape}")
    height, width = values.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(values[::-1].astype("<f4").tobytes())


def _mask_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".mask.pfm")


def load_depth(path, frame: str = "A") -> DepthMap:
    """Read a PFM depth raster and, if present, its sibling validity mask."""
    values = read_pfm(path)
    mask_file = _mask_path(path)
    mask = None
    if mask_file.exists():
        mask = read_pfm(mask_file) > 0.5
    return DepthMap(values, mask=mask, frame=frame)


def save_depth(path, depth: DepthMap) -> None:
    write_pfm(path, depth.values)
    if depth.mask is not None:
        write_pfm(_mask_path(path), depth.mask.astype(np.float64))


def read_intrinsics(path) -> Intrinsics:
    """Parse key = value lines with keys fx, fy, cx, cy, width, height."""
    fields = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputDomainError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _INTRINSICS_KEYS:
            raise InputDomainError(f"{path}:{lineno}: unknown intrinsics key {key!r}")
        try:
            fields[key] = float(value)
        except ValueError as exc:
            raise InputDomainError(f"{path}:{lineno}: bad number {value.strip()!r}") from exc
    missing = [k for k in _INTRINSICS_KEYS if k not in fields]
    if missing:
        raise InputDomainError(f"{path}: missing intrinsics keys {missing}")
    return Intrinsics(fx=fields["fx"], fy=fields["fy"], cx=fields["cx"], cy=fields["cy"],
                      width=int(fields["width"]), height=int(fields["height"]))


def write_intrinsics(path, intr: Intrinsics) -> None:
    lines = [f"fx = {float(intr.fx)!r}", f"fy = {float(intr.fy)!r}",
             f"cx = {float(intr.cx)!r}", f"cy = {float(intr.cy)!r}", f"width = {intr.width}", f"height = {intr.height}"]
    Path(path).write_text("\n".join(lines) + "\n")


def read_xyz(path, frame: str = "A") -> PointCloud:
    """One 'x y z' triple per line, decimal floats."""
    points = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InputDomainError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
        try:
            points.append([float(p) for p in parts])
        except ValueError as exc:
            raise InputDomainError(f"{path}:{lineno}: bad number in {line!r}") from exc
    if not points:
        raise InputDomainError(f"{path}: no points")
    return PointCloud(np.array(points), frame)


def write_xyz(path, cloud: PointCloud | np.ndarray) -> None:
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    with open(path, "w") as fh:
        for x, y, z in points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def read_kitti_poses(path) -> Trajectory:
    """KITTI odometry format: 12 floats per line, row-major 3x4 [R|t]."""
    poses = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 12:
            raise InputDomainError(f"{path}:{lineno}: expected 12 values, got {len(parts)}")
        try:
            mat = np.array([float(p) for p in parts]).reshape(3, 4)
        except ValueError as exc:
            raise InputDomainError(f"{path}:{lineno}: bad number") from exc
        try:
            poses.append(SE3Transform.from_matrix(mat))
        except InputDomainError as exc:
            raise InputDomainError(f"{path}:{lineno}: {exc}") from exc
    if not poses:
        raise InputDomainError(f"{path}: no poses")
    return Trajectory(tuple(poses))


def write_kitti_poses(path, trajectory: Trajectory | list[SE3Transform]) -> None:
    poses = trajectory.poses if isinstance(trajectory, Trajectory) else trajectory
    with open(path, "w") as fh:
        for pose in poses:
            fh.write(" ".join(repr(float(v)) for v in pose.as_matrix().ravel()) + "\n")


def write_matrix_csv(path, matrix: np.ndarray) -> None:
    """Row-major CSV with a '# m n' header line."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(f"# {matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise InputDomainError(f"{path}: missing '# m n' header")
    try:
        m, n = (int(v) for v in lines[0][1:].split())
    except ValueError as exc:
        raise InputDomainError(f"{path}: malformed '# m n' header") from exc
    rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()]
    matrix = np.array(rows)
    if matrix.shape != (m, n):
        raise InputDomainError(f"{path}: header says {m}x{n}, payload is {matrix.shape}")
    return matrix


def write_gradient_csv(path, bundle) -> None:
    """Gradient dump with columns (kind, index, value).

    Depth rows index frame-A sampled pixels 0..m-1 then frame-B pixels
    m..m+n-1; pose rows index the t_ab tangent 0..5 and, when t_ba was
    supplied independently, its tangent 6..11.
    """
    with open(path, "w") as fh:
        fh.write("kind,index,value\n")
        offset = 0
        for values in (bundle.d_depth_a, bundle.d_depth_b):
            for k, v in enumerate(values):
                fh.write(f"depth,{offset + k},{float(v)!r}\n")
            offset += len(values)
        for k, v in enumerate(bundle.d_pose_ab):
            fh.write(f"pose,{k},{float(v)!r}\n")
        if bundle.d_pose_ba is not None:
            for k, v in enumerate(bundle.d_pose_ba):
                fh.write(f"pose,{6 + k},{float(v)!r}\n")


def write_trace_csv(path, trace: np.ndarray) -> None:
    """Recovery trace: step, loss, pose_error_m, pose_error_rad, depth_rmse."""
    with open(path, "w") as fh:
        fh.write("step,loss,pose_error_m,pose_error_rad,depth_rmse\n")
        for row in np.asarray(trace):
            fh.write(f"{int(row[0])}," + ",".join(repr(float(v)) for v in row[1:]) + "\n")
