import numpy as np
import pytest

from wclot.geometry import DepthMap, Intrinsics, SE3Transform, so3_exp
from wclot.wcl import FramePair


def random_cloud(rng, n, scale=1.0):
    return scale * rng.random((n, 3))


def random_rotation(rng, scale=1.0):
    return so3_exp(scale * rng.standard_normal(3))


def random_transform(rng, rot_scale=1.0, trans_scale=1.0):
    return SE3Transform(random_rotation(rng, rot_scale),
                        trans_scale * rng.standard_normal(3))


def planted_pair(rng, n, noise=0.01):
    """Cloud and a noisy permuted copy: the optimal coupling is the planted
    permutation, resolved by a margin much larger than the default eps."""
    x = np.zeros((n, 3))
    count = 0
    while count < n:
        p = rng.random(3)
        if count == 0 or np.linalg.norm(x[:count] - p, axis=1).min() >= 0.3:
            x[count] = p
            count += 1
    perm = rng.permutation(n)
    y = np.clip(x[perm] + noise * rng.uniform(-1, 1, (n, 3)), 0.0, 1.0)
    return x, y, perm


def square_intrinsics(side):
    return Intrinsics(fx=0.9 * side, fy=0.9 * side, cx=(side - 1) / 2,
                      cy=(side - 1) / 2, width=side, height=side)


def near_consistent_pair(seed, side=6, depth_jitter=0.1, rot_scale=0.01,
                         trans_scale=0.03, mask_b=None):
    """Frame pair whose couplings resolve sharply at eps = 1e-3."""
    rng = np.random.default_rng(seed)
    intr = square_intrinsics(side)
    depth_a = DepthMap(2.0 + depth_jitter * rng.random((side, side)), frame="A")
    depth_b = DepthMap(2.0 + depth_jitter * rng.random((side, side)), mask=mask_b,
                       frame="B")
    t_ab = SE3Transform(so3_exp(rot_scale * rng.standard_normal(3)),
                        trans_scale * rng.standard_normal(3))
    return FramePair(depth_a, depth_b, intr, t_ab)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
