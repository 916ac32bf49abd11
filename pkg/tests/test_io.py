import numpy as np
import pytest

from wclot import io
from wclot.errors import InputDomainError
from wclot.geometry import DepthMap, Intrinsics, PointCloud
from wclot.metrics import Trajectory
from wclot.wcl import GradientBundle

from conftest import random_transform


class TestPfm:
    def test_roundtrip_is_float32_exact(self, tmp_path, rng):
        values = (1.0 + rng.random((5, 7))).astype(np.float32).astype(np.float64)
        path = tmp_path / "d.pfm"
        io.write_pfm(path, values)
        assert (io.read_pfm(path) == values).all()

    def test_header(self, tmp_path):
        path = tmp_path / "d.pfm"
        io.write_pfm(path, np.ones((2, 3)))
        raw = path.read_bytes()
        assert raw.startswith(b"Pf\n3 2\n-1.0\n")

    def test_row_order_bottom_up(self, tmp_path):
        # the first payload row of a PFM is the bottom image row
        path = tmp_path / "d.pfm"
        io.write_pfm(path, np.array([[1.0, 2.0], [3.0, 4.0]]))
        payload = np.frombuffer(path.read_bytes()[len(b"Pf\n2 2\n-1.0\n"):], "<f4")
        assert payload.tolist() == [3.0, 4.0, 1.0, 2.0]

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
        with pytest.raises(InputDomainError):
            io.read_pfm(path)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "short.pfm"
        path.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 10)
        with pytest.raises(InputDomainError):
            io.read_pfm(path)

    def test_depth_with_mask_roundtrip(self, tmp_path):
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 0] = False
        depth = DepthMap(np.full((4, 4), 2.0), mask=mask)
        io.save_depth(tmp_path / "d.pfm", depth)
        assert (tmp_path / "d.mask.pfm").exists()
        loaded = io.load_depth(tmp_path / "d.pfm")
        assert (loaded.values == depth.values).all()
        assert (loaded.mask == mask).all()

    def test_depth_without_mask(self, tmp_path):
        io.save_depth(tmp_path / "d.pfm", DepthMap(np.ones((3, 3))))
        loaded = io.load_depth(tmp_path / "d.pfm")
        assert loaded.mask is None


class TestIntrinsics:
    def test_roundtrip(self, tmp_path):
        intr = Intrinsics(fx=14.4, fy=14.4, cx=7.5, cy=7.5, width=16, height=16)
        path = tmp_path / "k.txt"
        io.write_intrinsics(path, intr)
        assert io.read_intrinsics(path) == intr

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("fx = 1.0\nfy = 1.0\ncx = 0.5\ncy = 0.5\nwidth = 4\n")
        with pytest.raises(InputDomainError, match="height"):
            io.read_intrinsics(path)

    def test_bad_line_numbered(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("fx = 1.0\nnot a pair\n")
        with pytest.raises(InputDomainError, match=":2"):
            io.read_intrinsics(path)

    def test_comments_and_blank_lines_ok(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("# camera\n\nfx = 2\nfy = 2\ncx = 1\ncy = 1\n"
                        "width = 4\nheight = 4\n")
        assert io.read_intrinsics(path).fx == 2.0


class TestXyz:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        cloud = PointCloud(rng.standard_normal((20, 3)), "A")
        path = tmp_path / "c.xyz"
        io.write_xyz(path, cloud)
        assert (io.read_xyz(path, frame="A").points == cloud.points).all()

    def test_bad_line_numbered(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("0 0 0\n1 2\n")
        with pytest.raises(InputDomainError, match=":2"):
            io.read_xyz(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("# nothing\n")
        with pytest.raises(InputDomainError):
            io.read_xyz(path)


class TestKittiPoses:
    def test_roundtrip(self, tmp_path, rng):
        traj = Trajectory(tuple(random_transform(rng) for _ in range(6)))
        path = tmp_path / "poses.txt"
        io.write_kitti_poses(path, traj)
        loaded = io.read_kitti_poses(path)
        assert len(loaded) == 6
        for a, b in zip(traj.poses, loaded.poses):
            assert (a.rotation == b.rotation).all()
            assert (a.translation == b.translation).all()

    def test_wrong_field_count_numbered(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0\n")
        with pytest.raises(InputDomainError, match=":2"):
            io.read_kitti_poses(path)

    def test_non_rigid_pose_rejected(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("2 0 0 0 0 2 0 0 0 0 2 0\n")
        with pytest.raises(InputDomainError, match=":1"):
            io.read_kitti_poses(path)


class TestCsv:
    def test_matrix_roundtrip(self, tmp_path, rng):
        m = rng.standard_normal((3, 5))
        path = tmp_path / "m.csv"
        io.write_matrix_csv(path, m)
        assert path.read_text().splitlines()[0] == "# 3 5"
        assert (io.read_matrix_csv(path) == m).all()

    def test_matrix_header_mismatch(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("# 2 2\n1.0,2.0\n")
        with pytest.raises(InputDomainError):
            io.read_matrix_csv(path)

    def test_gradient_csv_layout(self, tmp_path):
        bundle = GradientBundle(
            d_depth_a=np.array([1.0, 2.0]), d_depth_b=np.array([3.0]),
            pixels_a=np.array([[0, 0], [1, 0]]), pixels_b=np.array([[0, 0]]),
            d_pose_ab=np.arange(6, dtype=np.float64), d_pose_ba=None, warnings=[])
        path = tmp_path / "g.csv"
        io.write_gradient_csv(path, bundle)
        lines = path.read_text().splitlines()
        assert lines[0] == "kind,index,value"
        kinds = [line.split(",")[0] for line in lines[1:]]
        assert kinds == ["depth"] * 3 + ["pose"] * 6
        assert lines[3] == "depth,2,3.0"

    def test_trace_csv_header(self, tmp_path):
        path = tmp_path / "t.csv"
        io.write_trace_csv(path, np.array([[0, 0.5, 0.3, 0.0, 0.0]]))
        lines = path.read_text().splitlines()
        assert lines[0] == "step,loss,pose_error_m,pose_error_rad,depth_rmse"
        assert lines[1].startswith("0,0.5,")
