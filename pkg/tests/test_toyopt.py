import numpy as np
import pytest

import wclot.toyopt as toyopt
from wclot.errors import InputDomainError
from wclot.geometry import GridSampler, SE3Transform, back_project, grid_sample
from wclot.sinkhorn import SinkhornConfig
from wclot.toyopt import (SCENE_KINDS, OptimizeConfig, Perturbation, generate,
                          recover)
from wclot.wcl import WclConfig, loss


def advance_z(dz):
    """Camera advanced by dz toward the scene: frame-A point depths shrink."""
    return SE3Transform(np.eye(3), np.array([0.0, 0.0, -dz]))


def surface_points_in_frame_a(scene):
    pixels = grid_sample(GridSampler(1, 1), scene.intrinsics.width,
                         scene.intrinsics.height)
    cloud = back_project(scene.depth_b, scene.intrinsics, pixels)
    return scene.t_true.inverse().apply(cloud.points)


class TestGenerate:
    def test_identity_pose_copies_raster(self):
        for kind in SCENE_KINDS:
            scene = generate(kind, seed=3)
            assert (scene.depth_a.values == scene.depth_b.values).all()

    def test_flat_plane_advance_arithmetic(self):
        # plane at z=2; advancing the camera 0.5 m gives depth 1.5 everywhere
        scene = generate("flat_plane", t_true=advance_z(0.5))
        assert np.abs(scene.depth_a.values - 2.0).max() < 1e-12
        assert np.abs(scene.depth_b.values - 1.5).max() < 1e-12

    def test_seed_determinism(self):
        a = generate("random_smooth", seed=11)
        b = generate("random_smooth", seed=11)
        assert (a.depth_a.values == b.depth_a.values).all()
        c = generate("random_smooth", seed=12)
        assert (a.depth_a.values != c.depth_a.values).any()

    @pytest.mark.parametrize("kind", ["tilted_plane", "random_smooth"])
    def test_rerender_lies_on_surface(self, kind):
        # frame-B hits, carried back to frame A, satisfy the surface equation
        t = SE3Transform(np.eye(3), np.array([0.02, -0.01, -0.1]))
        scene = generate(kind, seed=5, t_true=t)
        pts = surface_points_in_frame_a(scene)
        rng = np.random.default_rng(5)
        surface = toyopt._make_surface(kind, rng)
        if kind == "tilted_plane":
            residual = pts @ surface["normal"] - surface["offset"]
        else:
            h = np.full(len(pts), surface["z0"])
            for w in surface["waves"]:
                h += w["amp"] * np.cos(pts[:, :2] @ w["freq"] + w["phase"])
            residual = pts[:, 2] - h
        assert np.abs(residual).max() < 1e-9

    def test_two_boxes_rerender_hits_scene_geometry(self):
        scene = generate("two_boxes", seed=2, t_true=advance_z(0.1))
        pts = surface_points_in_frame_a(scene)
        rng = np.random.default_rng(2)
        surface = toyopt._make_surface("two_boxes", rng)
        tops = sorted(box["top"] for box in surface["boxes"])
        zb = surface["background"]
        z = pts[:, 2]
        # every hit is a box top, the background, or a wall between them
        on_top = np.min(np.abs(z[:, None] - np.array(tops)[None, :]), axis=1) < 1e-9
        on_background = np.abs(z - zb) < 1e-9
        on_wall = (z > min(tops) - 1e-9) & (z < zb + 1e-9)
        assert (on_top | on_background | on_wall).all()
        assert on_top.any() and on_background.any()

    def test_consistency_loss_zero_at_truth(self):
        cfg = WclConfig(sinkhorn=SinkhornConfig(epsilon=1e-3, max_iters=100),
                        sampler=GridSampler(2, 2))
        for kind in SCENE_KINDS:
            scene = generate(kind, seed=1)
            assert loss(scene.frame_pair(), cfg).loss <= 1e-6

    def test_small_resolution_rejected(self):
        with pytest.raises(InputDomainError):
            generate("flat_plane", resolution=(4, 16))

    def test_unknown_kind_rejected(self):
        with pytest.raises(InputDomainError):
            generate("sphere")

    def test_self_occluding_pose_rejected(self):
        # advancing beyond the closest box top must fail loudly
        with pytest.raises(InputDomainError):
            generate("two_boxes", seed=2, t_true=advance_z(2.2))


class TestRecover:
    def test_zero_perturbation_is_stationary(self):
        scene = generate("flat_plane", seed=0)
        res = recover(scene, Perturbation(), OptimizeConfig(steps=20))
        assert res.success
        assert np.all(res.trace[:, 1] <= 1e-6)
        assert res.final_pose_error_m == 0.0
        assert res.final_pose_error_rad == 0.0
        assert res.final_depth_rmse == 0.0

    def test_pose_recovery_from_tz_error(self):
        scene = generate("flat_plane", seed=0)
        tangent = np.zeros(6)
        tangent[5] = 0.3
        res = recover(scene, Perturbation(pose_tangent=tangent),
                      OptimizeConfig(steps=500))
        assert res.success
        assert abs(res.t_estimate.translation[2]) <= 1e-3
        assert res.final_pose_error_m <= 1e-3
        assert np.all(np.diff(res.trace[:, 1]) <= 1e-15)

    def test_depth_recovery_from_noise(self):
        scene = generate("flat_plane", seed=1)
        cfg = OptimizeConfig(steps=200, optimize="depth_only",
                             wcl=WclConfig(sampler=GridSampler(1, 1)))
        res = recover(scene, Perturbation(depth_noise=0.05, noise_seed=7), cfg)
        assert res.success
        initial_rmse = res.trace[0, 4]
        assert res.final_depth_rmse <= 0.1 * initial_rmse

    def test_more_solver_iterations_never_hurt(self):
        # regression property: 100 inner iterations recover at least as well
        scene = generate("flat_plane", seed=4)
        tangent = np.zeros(6)
        tangent[5] = 0.25
        errs = {}
        for iters in (50, 100):
            cfg = OptimizeConfig(steps=120, wcl=WclConfig(
                sinkhorn=SinkhornConfig(epsilon=1e-3, max_iters=iters),
                sampler=GridSampler(2, 2)))
            errs[iters] = recover(scene, Perturbation(pose_tangent=tangent),
                                  cfg).final_pose_error_m
        assert errs[100] <= errs[50] + 1e-9

    def test_divergence_reported_with_trace(self, monkeypatch):
        # force a loss that grows whatever step is taken
        scene = generate("flat_plane", seed=0)
        counter = {"n": 0}

        real_loss = toyopt.loss

        def rising_loss(pair, cfg):
            out = real_loss(pair, cfg)
            counter["n"] += 1
            out.loss = float(counter["n"])
            return out

        monkeypatch.setattr(toyopt, "loss", rising_loss)
        tangent = np.zeros(6)
        tangent[5] = 0.3
        res = recover(scene, Perturbation(pose_tangent=tangent),
                      OptimizeConfig(steps=100))
        assert not res.success
        assert "diverged" in res.message
        assert len(res.trace) >= 10

    def test_config_validation(self):
        with pytest.raises(InputDomainError):
            OptimizeConfig(steps=0)
        with pytest.raises(InputDomainError):
            OptimizeConfig(step_size=0.0)
        with pytest.raises(InputDomainError):
            OptimizeConfig(optimize="everything")
        with pytest.raises(InputDomainError):
            Perturbation(depth_noise=1.5)
