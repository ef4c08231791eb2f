#!/usr/bin/env python3
"""The depth-supervision loss toolbox on a tiny synthetic scene.

A textured plane at constant depth is viewed by a camera that then slides
sideways. Warping the second view back with the true depth and pose should
reproduce the first view almost perfectly; warping with a wrong depth
should not. The photometric error quantifies both, and the remaining
losses (smoothness, sparse ground truth, normalized pseudo labels) compose
into the two training objectives.
"""

import numpy as np

from rankadapt import (
    Camera,
    DepthMap,
    LossWeights,
    Pose,
    compose_sl,
    compose_ssl,
    gt_loss,
    photometric_error,
    pseudo_loss,
    smooth_loss,
    warp,
)

rng = np.random.default_rng(3)
H, W = 24, 32
cam = Camera(fx=40.0, fy=40.0, cx=(W - 1) / 2, cy=(H - 1) / 2)
true_depth = 5.0

# Texture the plane with smooth random blobs so photometric error is
# informative (a flat image would match any warp).
base = rng.uniform(0.2, 0.8, (H // 4, W // 4, 3))
target = np.clip(np.kron(base, np.ones((4, 4, 1))), 0.0, 1.0)

# The warp samples the source at u + fx*tx/d, so a source equal to the
# target shifted right by that (integral) disparity warps back exactly.
tx = 0.25
disparity = int(round(cam.fx * tx / true_depth))
source = np.roll(target, disparity, axis=1)
pose = Pose(np.eye(3), np.array([tx, 0.0, 0.0]))

weights = LossWeights()


def masked_pe(depth_map):
    warped, in_bounds = warp(source, depth_map, pose, cam)
    _, pe_map = photometric_error(target, warped, weights)
    return float(pe_map[in_bounds].mean())  # out-of-bounds pixels excluded


depth_true = DepthMap(np.full((H, W), true_depth))
pe_true = masked_pe(depth_true)
pe_wrong = masked_pe(DepthMap(np.full((H, W), 2.0 * true_depth)))

print(f"photometric error with true depth : {pe_true:.5f}")
print(f"photometric error with 2x depth   : {pe_wrong:.5f}")
assert pe_true < pe_wrong

smooth = smooth_loss(depth_true, target)
print(f"smoothness of the flat plane      : {smooth:.5f}")

# Sparse "LiDAR" covers 10% of pixels; the pseudo label is a scaled and
# shifted version of the truth, which the normalized L1 forgives.
lidar_mask = rng.uniform(size=(H, W)) < 0.1
gt = DepthMap(np.full((H, W), true_depth), lidar_mask)
pred = DepthMap(np.full((H, W), true_depth) * rng.uniform(0.97, 1.03, (H, W)))
pseudo = DepthMap(0.5 * pred.depth + 1.0)

l_gt = gt_loss(pred, gt)
l_pseudo = pseudo_loss(pred, pseudo)
print(f"sparse absolute-relative loss     : {l_gt:.5f}")
print(f"pseudo-label loss (affine-immune) : {l_pseudo:.2e}")

print(f"\nself-supervised objective : {compose_ssl(pe_true, smooth, 0.0, weights):.5f}")
print(f"supervised objective      : {compose_sl(l_gt, l_pseudo, smooth, 0.0, weights):.5f}")
print("(ground truth weighted 2:1 over pseudo labels by default)")
