"""Supervision terms and the source/target composite losses.

All losses take Tensors (plain arrays are wrapped as constants), return
scalar Tensors, and are differentiable through the ops they compose:

  dice_loss     1 - (2*sum(P*G) + eps) / (sum(P) + sum(G) + eps), class mean
  l2_map_loss   mean squared difference over all elements
  task_loss     per-class binary cross-entropy with logits, mean reduced
  depth_loss    cross-entropy against the one-hot bin of ground-truth depth
  source_total  L_gt + lambda1*L_p + lambda2*L_y + L_d
  target_total  beta*(L_pl + L_mix + 2*L_da) + lambda1*L_p + lambda2*L_y
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnkit
from .errors import ContractViolation
from .geometry import DepthBinSpec
from .nnkit import Tensor, as_tensor


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.5
    lambda2: float = 0.01
    alpha: float = 0.99
    beta_max: float = 0.1
    dice_eps: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "alpha", "beta_max", "dice_eps"):
            if getattr(self, name) <= 0:
                raise ContractViolation(f"loss weight {name} must be positive")


def dice_loss(probs, target, eps: float = 1.0) -> Tensor:
    """Dice loss over class-leading maps; probs in [0,1], target binary."""
    probs, target = as_tensor(probs), as_tensor(target)
    if probs.shape != target.shape:
        raise ContractViolation("dice inputs must share a shape")
    if probs.data.min() < -1e-9 or probs.data.max() > 1 + 1e-9:
        raise ContractViolation("dice expects probabilities in [0, 1]")
    axes = tuple(range(1, probs.ndim))
    inter = (probs * target).sum(axis=axes)
    denom = probs.sum(axis=axes) + target.sum(axis=axes)
    per_class = 1.0 - (2.0 * inter + eps) / (denom + eps)
    return per_class.mean()


def l2_map_loss(pred, target) -> Tensor:
    """Mean squared difference over all elements."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ContractViolation("l2 inputs must share a shape")
    diff = pred - target
    return (diff * diff).mean()


def task_loss(logits, target) -> Tensor:
    """Per-class BCE with logits against a binary ground-truth map."""
    logits, target = as_tensor(logits), as_tensor(target)
    if logits.shape != target.shape:
        raise ContractViolation("task loss inputs must share a shape")
    return nnkit.bce_with_logits(logits, target).mean()


def depth_loss(dist, gt_depth: np.ndarray, bins: DepthBinSpec) -> Tensor:
    """Cross-entropy between the depth distribution and ground-truth bins.

    ``dist`` is (D, h, w) or (N, D, h, w); ``gt_depth`` matches the pixel
    dims, with NaN or out-of-range entries marking pixels without valid
    depth. Pixels without valid depth are excluded; if none are valid the
    loss is 0 by convention.
    """
    dist = as_tensor(dist)
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    if gt_depth.shape != dist.shape[:-3] + dist.shape[-2:]:
        raise ContractViolation("depth map dims must match the distribution pixel grid")
    idx, valid = bins.bin_of(gt_depth)
    n_valid = int(valid.sum())
    if n_valid == 0:
        return Tensor(0.0)
    onehot = np.zeros(dist.shape)
    axis = dist.ndim - 3
    expanded = np.expand_dims(idx, axis)
    np.put_along_axis(onehot, expanded, np.expand_dims(valid, axis).astype(np.float64), axis=axis)
    p_true = (dist * onehot).sum(axis=axis)
    log_p = nnkit.log(p_true + 1e-12)
    masked = nnkit.select(valid, log_p, Tensor(np.zeros(valid.shape)))
    return -(masked.sum() / n_valid)


def source_total(loss_gt, loss_p, loss_y, loss_d, weights: LossWeights) -> Tensor:
    """Composite source-domain loss."""
    return as_tensor(loss_gt) + weights.lambda1 * as_tensor(loss_p) + weights.lambda2 * as_tensor(loss_y) + as_tensor(loss_d)


def target_total(loss_pl, loss_mix, loss_da, loss_p, loss_y, beta: float, weights: LossWeights) -> Tensor:
    """Composite target-domain loss; the data-augmentation term carries a 2x factor."""
    ramped = beta * (as_tensor(loss_pl) + as_tensor(loss_mix) + 2.0 * as_tensor(loss_da))
    return ramped + weights.lambda1 * as_tensor(loss_p) + weights.lambda2 * as_tensor(loss_y)
