"""Feature-exchange data augmentation over weak/strong BEV feature pairs.

Three modes, sampled with equal probability when the mode is "auto":

  dropout   zero a Bernoulli(rate) subset of the weak map's channels and
            rescale survivors by 1/(1-rate), so the expectation is unchanged
  channel   per channel, take the strong map's channel with prob rate
  position  per BEV cell, take the strong map's full feature column with
            prob rate

Both inputs stay differentiable through the op. Given a seed the draw is
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnkit
from .errors import ContractViolation
from .nnkit import Tensor, as_tensor

MODES = ("dropout", "channel", "position")


@dataclass(frozen=True)
class FxdaConfig:
    mode: str = "auto"
    rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES + ("auto",):
            raise ContractViolation(f"fxda mode must be one of {MODES + ('auto',)}")
        if not (0.0 <= self.rate <= 1.0):
            raise ContractViolation("fxda rate must lie in [0, 1]")


def fxda_apply(weak, strong, cfg: FxdaConfig) -> Tensor:
    """Augment a (C, H, W) weak BEV map against its strong counterpart."""
    weak, strong = as_tensor(weak), as_tensor(strong)
    if weak.shape != strong.shape or weak.ndim != 3:
        raise ContractViolation("fxda needs two (C, H, W) maps of equal shape")
    rng = np.random.default_rng(cfg.seed)
    mode = cfg.mode
    if mode == "auto":
        mode = MODES[rng.integers(len(MODES))]

    c, h, w = weak.shape
    if mode == "dropout":
        keep = rng.random(c) >= cfg.rate
        if cfg.rate >= 1.0:
            scale = np.zeros(c)
        else:
            scale = keep / (1.0 - cfg.rate)
        return weak * scale[:, None, None]
    if mode == "channel":
        swap = rng.random(c) < cfg.rate
        return nnkit.select(np.broadcast_to(swap[:, None, None], weak.shape), strong, weak)
    swap = rng.random((h, w)) < cfg.rate
    return nnkit.select(np.broadcast_to(swap[None, :, :], weak.shape), strong, weak)
