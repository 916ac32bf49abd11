import json

import numpy as np
import pytest

from wclot import io, toyopt
from wclot.cli import main
from wclot.geometry import DepthMap, PointCloud, SE3Transform
from wclot.sinkhorn import TransportPlan

from conftest import planted_pair, random_transform


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    payload = json.loads(captured.out) if captured.out.strip() else None
    return code, payload, captured.err


def write_clouds(tmp_path, rng, offset=None):
    x, _, _ = planted_pair(rng, 6)
    y = x.copy() if offset is None else x + offset
    io.write_xyz(tmp_path / "a.xyz", PointCloud(x, "A"))
    io.write_xyz(tmp_path / "b.xyz", PointCloud(y, "B"))
    return tmp_path / "a.xyz", tmp_path / "b.xyz"


class TestSinkhornCommand:
    def test_identical_clouds(self, tmp_path, rng, capsys):
        a, b = write_clouds(tmp_path, rng)
        code, out, _ = run(capsys, "sinkhorn", str(a), str(b), "--eps", "1e-3")
        assert code == 0
        assert out["distance"] <= 1e-6
        assert set(out) == {"distance", "iters_run", "marginal_violation"}

    def test_offset_clouds_quarter(self, tmp_path, rng, capsys):
        a, b = write_clouds(tmp_path, rng, offset=np.array([0.0, 0.0, 0.5]))
        code, out, _ = run(capsys, "sinkhorn", str(a), str(b),
                           "--eps", "1e-3", "--iters", "2000", "--tol", "1e-12")
        assert code == 0
        assert out["distance"] == pytest.approx(0.25, abs=1e-3)

    def test_naive_large_costs_exit_2(self, tmp_path, rng, capsys):
        a, b = write_clouds(tmp_path, rng, offset=np.array([0.0, 0.0, 12.0]))
        code, out, err = run(capsys, "sinkhorn", str(a), str(b),
                             "--eps", "1e-3", "--mode", "naive")
        assert code == 2
        assert "log_domain" in err

    def test_plan_out(self, tmp_path, rng, capsys):
        a, b = write_clouds(tmp_path, rng)
        plan_path = tmp_path / "plan.csv"
        code, _, _ = run(capsys, "sinkhorn", str(a), str(b),
                         "--plan-out", str(plan_path))
        assert code == 0
        plan = TransportPlan(io.read_matrix_csv(plan_path))
        plan.validate(tol=1e-6)

    def test_parse_failure_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.xyz"
        bad.write_text("1 2\n")
        good = tmp_path / "good.xyz"
        good.write_text("0 0 0\n")
        code, _, err = run(capsys, "sinkhorn", str(bad), str(good))
        assert code == 1
        assert ":1" in err


@pytest.fixture
def demo_files(tmp_path, capsys):
    code = main(["demo", "--scene", "flat_plane", "--seed", "0",
                 "--perturb-tz", "0.5", "--steps", "1",
                 "--emit-files", str(tmp_path / "scene")])
    captured = capsys.readouterr()
    assert code == 0
    payload = json.loads(captured.out)
    return tmp_path / "scene", payload


class TestWclCommand:
    def test_roundtrip_matches_demo_initial_loss(self, demo_files, capsys):
        scene_dir, demo_out = demo_files
        code, out, _ = run(capsys, "wcl",
                           str(scene_dir / "depth_a.pfm"), str(scene_dir / "depth_b.pfm"),
                           str(scene_dir / "intrinsics.txt"), str(scene_dir / "pose_ab.txt"),
                           "--nc", "2", "--nr", "2")
        assert code == 0
        assert out["loss"] == pytest.approx(demo_out["initial_loss"], abs=1e-9)

    def test_true_pose_gives_zero(self, demo_files, capsys):
        scene_dir, _ = demo_files
        code, out, _ = run(capsys, "wcl",
                           str(scene_dir / "depth_a.pfm"), str(scene_dir / "depth_b.pfm"),
                           str(scene_dir / "intrinsics.txt"), str(scene_dir / "pose_true.txt"),
                           "--nc", "2", "--nr", "2")
        assert code == 0
        assert out["loss"] <= 1e-6

    def test_translated_plane_half(self, demo_files, capsys):
        # the emitted pose carries the 0.5 m z error against a consistent pair
        scene_dir, _ = demo_files
        code, out, _ = run(capsys, "wcl",
                           str(scene_dir / "depth_a.pfm"), str(scene_dir / "depth_b.pfm"),
                           str(scene_dir / "intrinsics.txt"), str(scene_dir / "pose_ab.txt"),
                           "--nc", "2", "--nr", "2")
        assert code == 0
        assert out["loss"] == pytest.approx(0.5, abs=1e-3)
        assert out["term_a"] == pytest.approx(0.25, abs=5e-4)

    def test_wide_frame_point_count(self, tmp_path, capsys):
        intr = toyopt.scene_intrinsics((128, 416))
        scene_dir = tmp_path / "wide"
        scene_dir.mkdir()
        depth = DepthMap(np.full((128, 416), 2.0))
        io.save_depth(scene_dir / "a.pfm", depth)
        io.save_depth(scene_dir / "b.pfm", depth)
        io.write_intrinsics(scene_dir / "k.txt", intr)
        io.write_kitti_poses(scene_dir / "pose.txt", [SE3Transform.identity()])
        code, out, _ = run(capsys, "wcl", str(scene_dir / "a.pfm"),
                           str(scene_dir / "b.pfm"), str(scene_dir / "k.txt"),
                           str(scene_dir / "pose.txt"), "--nc", "16", "--nr", "4")
        assert code == 0
        assert out["points_a"] == 832
        assert out["points_b"] == 832

    def test_gradient_out(self, demo_files, tmp_path, capsys):
        scene_dir, _ = demo_files
        grad_path = tmp_path / "grads.csv"
        code, out, _ = run(capsys, "wcl",
                           str(scene_dir / "depth_a.pfm"), str(scene_dir / "depth_b.pfm"),
                           str(scene_dir / "intrinsics.txt"), str(scene_dir / "pose_ab.txt"),
                           "--nc", "2", "--nr", "2", "--grad", "unrolled",
                           "--grad-out", str(grad_path))
        assert code == 0
        lines = grad_path.read_text().splitlines()
        assert lines[0] == "kind,index,value"
        n_depth = sum(1 for line in lines[1:] if line.startswith("depth,"))
        n_pose = sum(1 for line in lines[1:] if line.startswith("pose,"))
        assert n_depth == out["points_a"] + out["points_b"]
        assert n_pose == 6

    def test_shape_mismatch_exit_1(self, demo_files, tmp_path, capsys):
        scene_dir, _ = demo_files
        io.save_depth(tmp_path / "small.pfm", DepthMap(np.ones((8, 8))))
        code, _, err = run(capsys, "wcl",
                           str(scene_dir / "depth_a.pfm"), str(tmp_path / "small.pfm"),
                           str(scene_dir / "intrinsics.txt"), str(scene_dir / "pose_ab.txt"))
        assert code == 1


class TestEvalDepthCommand:
    def make_dirs(self, tmp_path, rng, identical=True):
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        for name in ("0001.pfm", "0002.pfm"):
            values = 1.0 + 30.0 * rng.random((6, 8))
            io.save_depth(gt_dir / name, DepthMap(values))
            pred = values if identical else values * (1 + 0.1 * rng.random((6, 8)))
            io.save_depth(pred_dir / name, DepthMap(pred))
        return gt_dir, pred_dir

    def test_identical_dirs(self, tmp_path, rng, capsys):
        gt_dir, pred_dir = self.make_dirs(tmp_path, rng)
        code, out, _ = run(capsys, "eval-depth", str(gt_dir), str(pred_dir))
        assert code == 0
        assert out["aggregate"]["abs_rel"] == 0.0
        assert out["aggregate"]["a1"] == 1.0
        assert out["n_files"] == 2
        assert set(out["per_file"]) == {"0001.pfm", "0002.pfm"}

    def test_two_pixel_crafted_case(self, tmp_path, capsys):
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        io.save_depth(gt_dir / "x.pfm", DepthMap(np.array([[2.0, 4.0]])))
        io.save_depth(pred_dir / "x.pfm", DepthMap(np.array([[1.0, 4.4]])))
        code, out, _ = run(capsys, "eval-depth", str(gt_dir), str(pred_dir),
                           "--no-median-scaling")
        assert code == 0
        agg = out["aggregate"]
        # float32 rasters quantize 4.4, so compare at PFM precision
        assert agg["abs_rel"] == pytest.approx(0.3, abs=1e-6)
        assert agg["sq_rel"] == pytest.approx(0.27, abs=1e-6)
        assert agg["rmse"] == pytest.approx(np.sqrt(0.58), abs=1e-6)
        assert agg["a1"] == 0.5

    def test_unmatched_files_exit_1(self, tmp_path, rng, capsys):
        gt_dir, pred_dir = self.make_dirs(tmp_path, rng)
        (pred_dir / "0002.pfm").unlink()
        code, _, err = run(capsys, "eval-depth", str(gt_dir), str(pred_dir))
        assert code == 1
        assert "0002.pfm" in err

    def test_empty_intersection_exit_1(self, tmp_path, capsys):
        (tmp_path / "gt").mkdir()
        (tmp_path / "pred").mkdir()
        code, _, _ = run(capsys, "eval-depth", str(tmp_path / "gt"),
                         str(tmp_path / "pred"))
        assert code == 1

    def test_csv_out(self, tmp_path, rng, capsys):
        gt_dir, pred_dir = self.make_dirs(tmp_path, rng, identical=False)
        csv_path = tmp_path / "report.csv"
        code, _, _ = run(capsys, "eval-depth", str(gt_dir), str(pred_dir),
                         "--csv-out", str(csv_path))
        assert code == 0
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3"
        assert len(lines[1].split(",")) == 7


class TestEvalPoseCommand:
    def write_traj(self, path, poses):
        io.write_kitti_poses(path, poses)

    def test_identical(self, tmp_path, rng, capsys):
        poses = [random_transform(rng, rot_scale=0.2) for _ in range(8)]
        self.write_traj(tmp_path / "gt.txt", poses)
        self.write_traj(tmp_path / "pred.txt", poses)
        code, out, _ = run(capsys, "eval-pose", str(tmp_path / "gt.txt"),
                           str(tmp_path / "pred.txt"))
        assert code == 0
        assert out == {"ate_mean": 0.0, "ate_std": 0.0, "n_snippets": 4}

    def test_doubled_translations(self, tmp_path, rng, capsys):
        poses = [random_transform(rng, rot_scale=0.2) for _ in range(8)]
        doubled = [SE3Transform(p.rotation, 2.0 * p.translation) for p in poses]
        self.write_traj(tmp_path / "gt.txt", poses)
        self.write_traj(tmp_path / "pred.txt", doubled)
        code, out, _ = run(capsys, "eval-pose", str(tmp_path / "gt.txt"),
                           str(tmp_path / "pred.txt"))
        assert code == 0
        assert out["ate_mean"] <= 1e-9

    def test_length_mismatch_exit_1(self, tmp_path, rng, capsys):
        poses = [random_transform(rng, rot_scale=0.2) for _ in range(8)]
        self.write_traj(tmp_path / "gt.txt", poses)
        self.write_traj(tmp_path / "pred.txt", poses[:-1])
        code, _, _ = run(capsys, "eval-pose", str(tmp_path / "gt.txt"),
                         str(tmp_path / "pred.txt"))
        assert code == 1


class TestDemoCommand:
    def test_zero_perturbation_constant_trace(self, tmp_path, capsys):
        trace_path = tmp_path / "trace.csv"
        code, out, _ = run(capsys, "demo", "--perturb-tz", "0", "--steps", "10",
                           "--trace-out", str(trace_path))
        assert code == 0
        assert out["final_pose_error_m"] == 0.0
        losses = [float(line.split(",")[1])
                  for line in trace_path.read_text().splitlines()[1:]]
        assert max(losses) <= 1e-6

    def test_pose_recovery(self, capsys):
        code, out, _ = run(capsys, "demo", "--perturb-tz", "0.3", "--steps", "500")
        assert code == 0
        assert out["success"]
        assert out["final_pose_error_m"] <= 1e-3


class TestGradCheckCommand:
    def test_unrolled_passes_tolerance(self, capsys):
        code, out, _ = run(capsys, "grad-check", "--seed", "1", "--size", "25")
        assert code == 0
        assert out["max_rel_err"] <= 1e-4

    def test_fixed_mode_within_envelope_gap(self, capsys):
        code, out, _ = run(capsys, "grad-check", "--seed", "2", "--size", "16",
                           "--grad", "fixed")
        assert code == 0
        assert out["max_rel_err"] <= 5e-2

    def test_single_point_clouds(self, capsys):
        code, out, _ = run(capsys, "grad-check", "--seed", "0", "--size", "1")
        assert code == 0
        assert out["max_rel_err"] <= 1e-6

    def test_size_cap(self, capsys):
        code, _, err = run(capsys, "grad-check", "--size", "100")
        assert code == 1


class TestCliContract:
    def test_unknown_flag_exit_1(self, capsys):
        code, _, _ = run(capsys, "sinkhorn", "a.xyz", "b.xyz", "--frobnicate")
        assert code == 1

    def test_help_exit_0(self, capsys):
        assert main(["--help"]) == 0

    def test_missing_file_exit_1(self, capsys):
        code, _, _ = run(capsys, "sinkhorn", "/nonexistent/a.xyz", "/nonexistent/b.xyz")
        assert code == 1

    def test_determinism(self, tmp_path, rng, capsys):
        a, b = write_clouds(tmp_path, rng, offset=np.array([0.05, 0.0, 0.1]))
        _, out1, _ = run(capsys, "sinkhorn", str(a), str(b))
        _, out2, _ = run(capsys, "sinkhorn", str(a), str(b))
        assert out1 == out2
