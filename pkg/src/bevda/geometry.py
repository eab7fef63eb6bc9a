"""Camera models, frustum construction, and BEV rasterization.

Coordinate conventions used throughout the package:

  Ego frame (right-handed):
    - x forward, y left, z up; ground plane at z = 0 (meters).
    - The BEV grid lives in the ego (x, y) plane: grid rows index x,
      grid columns index y.

  Camera frame (right-handed, standard computer vision):
    - x right, y down, z forward along the optical axis.
    - ``rotation`` maps camera-frame vectors into the ego frame and
      ``translation`` is the camera center in ego coordinates.

  Image frame:
    - (u, v) in pixels of the *final* (preprocessed) image, u along width,
      v along height, origin at the top-left corner, pixel centers at
      half-integer coordinates.
    - ``preproc`` is a 3x3 transform mapping raw-image pixels to
      final-image pixels; its inverse is applied before the intrinsics.

A pixel (u, v) at planar depth d (distance along the optical axis) unprojects
to the ego frame as

    p = R @ K^-1 @ T^-1 @ [u*d, v*d, d] + t

which is the composition final-pixel -> raw-pixel -> camera ray -> ego.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation, GeometryError

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraView:
    """Geometric identity of one camera: intrinsics, pose, and preprocessing.

    Attributes:
        intrinsics: 3x3 upper-triangular K in pixels, K[2, 2] == 1.
        rotation: 3x3 orthonormal matrix mapping camera frame -> ego frame.
        translation: camera center in the ego frame (meters).
        preproc: invertible 3x3 image-plane transform, final <- raw pixels.
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    preproc: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "intrinsics", np.asarray(self.intrinsics, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        object.__setattr__(self, "preproc", np.asarray(self.preproc, dtype=np.float64))
        self.validate()

    def validate(self):
        k, r, t, p = self.intrinsics, self.rotation, self.translation, self.preproc
        if k.shape != (3, 3) or r.shape != (3, 3) or t.shape != (3,) or p.shape != (3, 3):
            raise GeometryError("camera parameter shapes must be K(3,3) R(3,3) t(3,) T(3,3)")
        if abs(k[2, 2] - 1.0) > 1e-12 or np.any(np.abs(k[[1, 2, 2], [0, 0, 1]]) > 1e-12):
            raise GeometryError("intrinsics must be upper-triangular with K[2,2] = 1")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise GeometryError("focal lengths must be positive")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise GeometryError("rotation must be orthonormal")
        if abs(np.linalg.det(p)) < 1e-12:
            raise GeometryError("preprocessing transform is singular")

    def ego_from_pixel_matrix(self) -> np.ndarray:
        """R @ K^-1 @ T^-1, the 3x3 part of the unprojection map."""
        return self.rotation @ np.linalg.inv(self.intrinsics) @ np.linalg.inv(self.preproc)

    def content_key(self) -> bytes:
        """Byte string identifying the view by its parameter values."""
        return b"".join(
            np.ascontiguousarray(a).tobytes()
            for a in (self.intrinsics, self.rotation, self.translation, self.preproc)
        )


@dataclass(frozen=True)
class DepthBinSpec:
    """Uniform planar-depth binning over [d_min, d_max)."""

    d_min: float
    d_max: float
    count: int

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise ConfigError(f"depth range must satisfy 0 < d_min < d_max, got [{self.d_min}, {self.d_max})")
        if self.count < 1:
            raise ConfigError("depth bin count must be >= 1")

    @property
    def width(self) -> float:
        return (self.d_max - self.d_min) / self.count

    def centers(self) -> np.ndarray:
        return self.d_min + (np.arange(self.count) + 0.5) * self.width

    def bin_of(self, depth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bin index per depth value and a validity mask for [d_min, d_max)."""
        depth = np.asarray(depth, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            idx = np.floor((depth - self.d_min) / self.width)
            valid = np.isfinite(depth) & (depth >= self.d_min) & (depth < self.d_max)
        idx = np.where(valid, idx, 0).astype(np.int64)
        return idx, valid


@dataclass(frozen=True)
class BevGridSpec:
    """Ego-centered ground grid with half-open cells [lo, hi) and floor indexing.

    Cell (0, 0) is anchored at (x_min, y_min); rows advance along x,
    columns along y. A point on the max edge of either axis is out of range.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    resolution: float

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError("grid resolution must be positive")
        for lo, hi, name in ((self.x_min, self.x_max, "x"), (self.y_min, self.y_max, "y")):
            if hi <= lo:
                raise ConfigError(f"grid {name}-range is empty")
            n = (hi - lo) / self.resolution
            if abs(n - round(n)) > 1e-9:
                raise ConfigError(f"grid {name}-range is not an integer number of cells")

    @property
    def shape(self) -> tuple[int, int]:
        return (
            int(round((self.x_max - self.x_min) / self.resolution)),
            int(round((self.y_max - self.y_min) / self.resolution)),
        )

    @property
    def n_cells(self) -> int:
        h, w = self.shape
        return h * w

    def cell_of(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map (..., 2+) ego points to (rows, cols, valid). Never wraps."""
        points = np.asarray(points, dtype=np.float64)
        x, y = points[..., 0], points[..., 1]
        rows = np.floor((x - self.x_min) / self.resolution)
        cols = np.floor((y - self.y_min) / self.resolution)
        h, w = self.shape
        valid = (
            np.isfinite(x)
            & np.isfinite(y)
            & (rows >= 0)
            & (rows < h)
            & (cols >= 0)
            & (cols < w)
        )
        rows = np.where(valid, rows, 0).astype(np.int64)
        cols = np.where(valid, cols, 0).astype(np.int64)
        return rows, cols, valid

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) center coordinate arrays of shape (H,) and (W,)."""
        h, w = self.shape
        xs = self.x_min + (np.arange(h) + 0.5) * self.resolution
        ys = self.y_min + (np.arange(w) + 0.5) * self.resolution
        return xs, ys


@dataclass(frozen=True)
class FrustumCloud:
    """Lifted frustum of one view: a (D, h, w) grid of ego-frame 3D points.

    ``valid`` marks points whose (x, y) falls inside the BEV grid the cloud
    was built against; clouds built without a grid mark every point valid.
    """

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 4 or self.points.shape[-1] != 3:
            raise ContractViolation("frustum points must have shape (D, h, w, 3)")
        if self.valid.shape != self.points.shape[:-1]:
            raise ContractViolation("validity mask must match the point grid shape")


def build_frustum_template(feat_h: int, feat_w: int, bins: DepthBinSpec, stride: float = 1.0) -> np.ndarray:
    """(u, v, d) triples for every (pixel, depth-bin) pair of a feature map.

    u and v are final-image pixel coordinates of the feature-map pixel
    centers, (j + 0.5) * stride and (i + 0.5) * stride; d runs over the bin
    centers. Returns an array of shape (D, feat_h, feat_w, 3).
    """
    if feat_h < 1 or feat_w < 1:
        raise ConfigError("feature map dims must be >= 1")
    if stride <= 0:
        raise ConfigError("stride must be positive")
    u = (np.arange(feat_w) + 0.5) * stride
    v = (np.arange(feat_h) + 0.5) * stride
    d = bins.centers()
    out = np.empty((bins.count, feat_h, feat_w, 3), dtype=np.float64)
    out[..., 0] = u[None, None, :]
    out[..., 1] = v[None, :, None]
    out[..., 2] = d[:, None, None]
    return out


def unproject_to_ego(template: np.ndarray, view: CameraView, grid: BevGridSpec | None = None) -> FrustumCloud:
    """Lift every (u, v, d) template triple into the ego frame.

    Applies p = R K^-1 T^-1 [u*d, v*d, d] + t. When ``grid`` is given, the
    cloud's validity mask is filled from the grid; otherwise all points are
    marked valid.
    """
    m = view.ego_from_pixel_matrix()
    uv1 = np.concatenate([template[..., :2], np.ones_like(template[..., :1])], axis=-1)
    d = template[..., 2:3]
    points = (uv1 @ m.T) * d + view.translation
    if grid is None:
        valid = np.ones(points.shape[:-1], dtype=bool)
    else:
        _, _, valid = grid.cell_of(points)
    return FrustumCloud(points=points, valid=valid)


def unproject_field(
    template: np.ndarray,
    intrinsics: np.ndarray,
    rotations: np.ndarray,
    translations: np.ndarray,
    preprocs: np.ndarray,
    grid: BevGridSpec | None = None,
) -> FrustumCloud:
    """Unproject with per-pixel camera parameters.

    Parameter fields have shapes (h, w, 3, 3) for intrinsics / rotations /
    preprocs and (h, w, 3) for translations, matching the template's pixel
    grid. Used by cross-domain mixing, where each pixel may carry either
    domain's matrices.
    """
    if intrinsics.shape[:2] != template.shape[1:3]:
        raise ContractViolation("parameter field dims must match the template pixel grid")
    m = rotations @ np.linalg.inv(intrinsics) @ np.linalg.inv(preprocs)
    uv1 = np.concatenate([template[..., :2], np.ones_like(template[..., :1])], axis=-1)
    d = template[..., 2:3]
    points = np.einsum("hwab,dhwb->dhwa", m, uv1) * d + translations[None]
    if grid is None:
        valid = np.ones(points.shape[:-1], dtype=bool)
    else:
        _, _, valid = grid.cell_of(points)
    return FrustumCloud(points=points, valid=valid)


def reproject_from_ego(points: np.ndarray, view: CameraView) -> np.ndarray:
    """Inverse of unproject_to_ego: ego points -> (u, v, d) triples."""
    cam = (np.asarray(points, dtype=np.float64) - view.translation) @ view.rotation
    d = cam[..., 2:3]
    pix = (cam / d) @ (view.preproc @ view.intrinsics).T
    out = np.concatenate([pix[..., :2], d], axis=-1)
    return out


def rasterize_to_cells(cloud: FrustumCloud, grid: BevGridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-point BEV cell indices (rows, cols, valid) for a frustum cloud.

    Out-of-range points are flagged invalid, never wrapped. The returned
    validity is the AND of the cloud's own mask and in-range membership.
    """
    rows, cols, valid = grid.cell_of(cloud.points)
    return rows, cols, valid & cloud.valid


def frustum_footprint(
    view: CameraView,
    feat_h: int,
    feat_w: int,
    bins: DepthBinSpec,
    grid: BevGridSpec,
    stride: float = 1.0,
) -> np.ndarray:
    """Boolean BEV mask of every cell touched by the view's frustum points."""
    template = build_frustum_template(feat_h, feat_w, bins, stride)
    cloud = unproject_to_ego(template, view, grid)
    rows, cols, valid = rasterize_to_cells(cloud, grid)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[rows[valid], cols[valid]] = True
    return mask


def load_rig(entries: list[dict[str, list[float]]]) -> list[CameraView]:
    """Build a camera rig from parsed config values.

    Each entry carries per-view keys: fx, fy, cx, cy (scalars), rotation
    (row-major 9 floats), translation (3 floats), preproc (9 floats).
    """
    rig = []
    for i, e in enumerate(entries):
        try:
            fx, fy, cx, cy = (float(e[k][0]) for k in ("fx", "fy", "cx", "cy"))
            rot = np.array(e["rotation"], dtype=np.float64).reshape(3, 3)
            tr = np.array(e["translation"], dtype=np.float64)
            pre = np.array(e["preproc"], dtype=np.float64).reshape(3, 3)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"rig view {i}: {exc}") from exc
        k = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        try:
            rig.append(CameraView(intrinsics=k, rotation=rot, translation=tr, preproc=pre))
        except GeometryError as exc:
            raise ConfigError(f"rig view {i}: {exc}") from exc
    return rig
