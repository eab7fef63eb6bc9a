"""Lift-splat view transformation and the mask view transformer.

The lift step multiplies per-pixel features by a discrete depth distribution,
producing one feature vector per (depth bin, pixel). The splat step sum-pools
those vectors into BEV cells through the scatter kernel. Pooling accumulates
in ascending (view, depth bin, row, column) point order, where views are
first brought into a canonical order derived from their content, so the
pooled map is bit-identical no matter how the caller orders the views.

The mask view transformer replaces features with per-pixel class labels and
the depth distribution with its argmax one-hot, turning perspective
pseudo-labels into dynamic BEV labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, nnkit
from .errors import ContractViolation
from .geometry import BevGridSpec, CameraView, DepthBinSpec, FrustumCloud, build_frustum_template, rasterize_to_cells, unproject_to_ego
from .nnkit import Tensor, as_tensor


@dataclass(frozen=True)
class DynamicBevLabels:
    """Per-class splat mass on the BEV grid plus its thresholded views.

    ``occupancy`` counts label splats per (class, cell). ``clamped`` caps the
    mass at 1 for use as an L2 target; ``binarized`` thresholds at ``tau``.
    """

    occupancy: np.ndarray
    tau: float = 0.5

    @property
    def clamped(self) -> np.ndarray:
        return np.minimum(self.occupancy, 1.0)

    @property
    def binarized(self) -> np.ndarray:
        return self.occupancy > self.tau


def depth_distribution(logits) -> Tensor:
    """Per-pixel softmax over the depth-bin axis of (..., D, h, w) logits."""
    logits = as_tensor(logits)
    if not np.all(np.isfinite(logits.data)):
        raise ContractViolation("depth logits must be finite")
    return nnkit.softmax(logits, axis=-3)


def lift(features, dist) -> Tensor:
    """Outer-product lift: out[k, i, j, :] = dist[k, i, j] * features[:, i, j].

    ``features`` is (C, h, w), ``dist`` is (D, h, w); the result is
    (D, h, w, C).
    """
    features, dist = as_tensor(features), as_tensor(dist)
    if features.ndim != 3 or dist.ndim != 3 or features.shape[1:] != dist.shape[1:]:
        raise ContractViolation("lift needs (C,h,w) features and (D,h,w) dist on one pixel grid")
    feat_last = nnkit.transpose(features, (1, 2, 0))  # (h, w, C)
    return nnkit.reshape(dist, dist.shape + (1,)) * nnkit.reshape(feat_last, (1,) + feat_last.shape)


def splat_pool(point_features, cell_rows: np.ndarray, cell_cols: np.ndarray, valid: np.ndarray, grid: BevGridSpec) -> Tensor:
    """Sum-pool per-point features into BEV cells.

    ``point_features`` is (..., C) and is flattened in C order, so the
    accumulation order is exactly the order the caller laid the points out
    in. Invalid points contribute nothing. Returns a (C, H_b, W_b) tensor.
    """
    point_features = as_tensor(point_features)
    c = point_features.shape[-1]
    h, w = grid.shape
    flat_feats = nnkit.reshape(point_features, (-1, c))
    flat_idx = (cell_rows.astype(np.int64) * w + cell_cols.astype(np.int64)).ravel()
    flat_valid = np.asarray(valid, dtype=bool).ravel()
    if flat_idx.shape[0] != flat_feats.shape[0]:
        raise ContractViolation("cell indices and point features disagree on the point count")
    keep = np.flatnonzero(flat_valid)
    idx_kept = flat_idx[keep]

    pooled = kernels.scatter_sum(idx_kept, flat_feats.data[keep], h * w)
    out_data = pooled.reshape(h, w, c).transpose(2, 0, 1)

    src = flat_feats

    def backward(g):
        if not src.requires_grad:
            return
        cells = np.ascontiguousarray(g.transpose(1, 2, 0).reshape(h * w, c))
        grad_points = np.zeros_like(src.data)
        grad_points[keep] = kernels.gather(cells, idx_kept)
        src._accumulate(grad_points)

    return Tensor(out_data, parents=(src,), backward=backward)


def _canonical_order(keys: list[bytes]) -> list[int]:
    return sorted(range(len(keys)), key=keys.__getitem__)


def _view_entry_key(cloud: FrustumCloud, *arrays) -> bytes:
    parts = [np.ascontiguousarray(cloud.points).tobytes()]
    parts.extend(np.ascontiguousarray(a).tobytes() for a in arrays)
    return b"".join(parts)


def build_clouds(
    views: list[CameraView],
    feat_h: int,
    feat_w: int,
    bins: DepthBinSpec,
    grid: BevGridSpec,
    stride: float = 1.0,
) -> list[FrustumCloud]:
    template = build_frustum_template(feat_h, feat_w, bins, stride)
    return [unproject_to_ego(template, v, grid) for v in views]


def view_transform(
    features,
    logits,
    views: list[CameraView] | None,
    bins: DepthBinSpec,
    grid: BevGridSpec,
    stride: float = 1.0,
    clouds: list[FrustumCloud] | None = None,
) -> Tensor:
    """Full lift-splat transform of multi-view features into one BEV map.

    ``features`` and ``logits`` are per-view lists of (C, h, w) and (D, h, w)
    tensors. Frustum clouds are built from the views unless supplied (the
    mixing pipeline passes per-pixel-parameter clouds directly).
    """
    features = [as_tensor(f) for f in features]
    logits = [as_tensor(l) for l in logits]
    if len(features) != len(logits):
        raise ContractViolation("need one logit map per feature map")
    if clouds is None:
        if views is None:
            raise ContractViolation("either views or clouds must be given")
        fh, fw = features[0].shape[1:]
        clouds = build_clouds(views, fh, fw, bins, grid, stride)
    if len(clouds) != len(features):
        raise ContractViolation("need one frustum cloud per view")
    for f in features:
        if f.shape[1:] != features[0].shape[1:]:
            raise ContractViolation("all views must share feature dims")

    keys = [_view_entry_key(cl, f.data, l.data) for cl, f, l in zip(clouds, features, logits)]
    order = _canonical_order(keys)

    lifted, rows, cols, valids = [], [], [], []
    for i in order:
        dist = depth_distribution(logits[i])
        pts = lift(features[i], dist)
        r, c, v = rasterize_to_cells(clouds[i], grid)
        lifted.append(nnkit.reshape(pts, (-1, pts.shape[-1])))
        rows.append(r.ravel())
        cols.append(c.ravel())
        valids.append(v.ravel())

    all_points = nnkit.concat(lifted, axis=0) if len(lifted) > 1 else lifted[0]
    return splat_pool(all_points, np.concatenate(rows), np.concatenate(cols), np.concatenate(valids), grid)


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    scale = n_in / n_out
    idx = np.floor((np.arange(n_out) + 0.5) * scale).astype(np.int64)
    return np.clip(idx, 0, n_in - 1)


def resize_nearest(arr: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resample of the trailing two axes."""
    h_out, w_out = out_hw
    if h_out < 1 or w_out < 1:
        raise ContractViolation("target dims must be positive")
    ri = _nearest_index(arr.shape[-2], h_out)
    ci = _nearest_index(arr.shape[-1], w_out)
    return arr[..., ri[:, None], ci[None, :]]


def resize_labels(labels: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of a per-pixel class map; invents no classes."""
    return resize_nearest(np.asarray(labels), out_hw)


def mask_view_transform(
    labels,
    dists,
    views: list[CameraView] | None,
    bins: DepthBinSpec,
    grid: BevGridSpec,
    n_classes: int,
    tau: float = 0.5,
    stride: float = 1.0,
    clouds: list[FrustumCloud] | None = None,
) -> DynamicBevLabels:
    """Project per-pixel class labels into BEV at their argmax-depth bins.

    ``labels`` is a per-view list of (h, w) integer maps already resized to
    the depth-estimate resolution; negative entries mean "no label" and are
    skipped, ids >= n_classes are rejected. ``dists`` is the per-view list of
    (D, h, w) depth distributions; ties in the argmax go to the smaller bin
    index. Each labeled pixel contributes exactly one unit of class mass.
    """
    labels = [np.asarray(l) for l in labels]
    dists = [d.data if isinstance(d, Tensor) else np.asarray(d) for d in dists]
    if clouds is None:
        if views is None:
            raise ContractViolation("either views or clouds must be given")
        fh, fw = labels[0].shape
        clouds = build_clouds(views, fh, fw, bins, grid, stride)

    keys = [_view_entry_key(cl, lb, ds) for cl, lb, ds in zip(clouds, labels, dists)]
    order = _canonical_order(keys)

    h, w = grid.shape
    n_cells = h * w
    flat_parts, mass_parts = [], []
    for i in order:
        lab, dist, cloud = labels[i], dists[i], clouds[i]
        if lab.shape != dist.shape[1:]:
            raise ContractViolation("label map and depth distribution disagree on pixel dims")
        if lab.max(initial=-1) >= n_classes:
            raise ContractViolation(f"class id >= {n_classes} in label map")
        best_bin = dist.argmax(axis=0)  # ties resolve to the smaller index
        rows, cols, valid = rasterize_to_cells(cloud, grid)
        sel = (np.arange(lab.shape[0])[:, None], np.arange(lab.shape[1])[None, :])
        r = rows[best_bin, sel[0], sel[1]]
        c = cols[best_bin, sel[0], sel[1]]
        v = valid[best_bin, sel[0], sel[1]] & (lab >= 0)
        flat = lab.astype(np.int64) * n_cells + r * w + c
        keep = v.ravel()
        flat_parts.append(flat.ravel()[keep])
        mass_parts.append(np.ones(int(keep.sum()), dtype=np.float64))

    flat_all = np.concatenate(flat_parts) if flat_parts else np.empty(0, dtype=np.int64)
    mass_all = np.concatenate(mass_parts) if mass_parts else np.empty(0, dtype=np.float64)
    pooled = kernels.scatter_sum(flat_all, mass_all[:, None], n_classes * n_cells)
    occupancy = pooled.reshape(n_classes, h, w)
    return DynamicBevLabels(occupancy=occupancy, tau=tau)
