import numpy as np
import pytest

from bevda import nnkit
from bevda.errors import ContractViolation
from bevda.geometry import (
    BevGridSpec,
    CameraView,
    DepthBinSpec,
    FrustumCloud,
    build_frustum_template,
    rasterize_to_cells,
    unproject_to_ego,
)
from bevda.nnkit import Tensor
from bevda.viewtransform import (
    depth_distribution,
    lift,
    mask_view_transform,
    resize_labels,
    splat_pool,
    view_transform,
)


def forward_camera(img_w=32, img_h=32, height=1.0):
    fx = img_w / 2.0
    k = np.array([[fx, 0, img_w / 2], [0, fx, img_h / 2], [0, 0, 1.0]])
    r = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return CameraView(k, r, np.array([0.0, 0.0, height]))


class TestDepthDistribution:
    def test_uniform_logits(self):
        logits = np.zeros((4, 2, 3))
        dist = depth_distribution(logits)
        np.testing.assert_allclose(dist.data, 0.25)

    def test_closed_form_two_bins(self):
        logits = np.stack([np.zeros((1, 1)), np.full((1, 1), np.log(2.0))])
        dist = depth_distribution(logits)
        np.testing.assert_allclose(dist.data[:, 0, 0], [1 / 3, 2 / 3], rtol=1e-12)

    def test_matches_extended_precision_oracle(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(scale=30, size=(8, 4, 5))
        dist = depth_distribution(logits).data
        hi = logits.astype(np.longdouble)
        ref = np.exp(hi - hi.max(axis=0)) / np.exp(hi - hi.max(axis=0)).sum(axis=0)
        err = np.abs(dist - ref.astype(np.float64)) / np.maximum(ref.astype(np.float64), 1e-300)
        assert err.max() < 1e-6

    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        dist = depth_distribution(rng.normal(size=(6, 3, 3))).data
        assert np.abs(dist.sum(axis=0) - 1.0).max() <= 1e-6


class TestLift:
    def test_scalar_scaling(self):
        feats = np.zeros((2, 1, 1))
        feats[:, 0, 0] = [2.0, 3.0]
        dist = np.full((2, 1, 1), 0.5)
        out = lift(feats, dist).data
        np.testing.assert_allclose(out[0, 0, 0], [1.0, 1.5])
        np.testing.assert_allclose(out[1, 0, 0], [1.0, 1.5])

    def test_one_hot_selects_slice(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(3, 2, 2))
        dist = np.zeros((4, 2, 2))
        dist[1] = 1.0
        out = lift(feats, dist).data
        assert np.all(out[[0, 2, 3]] == 0)
        np.testing.assert_allclose(out[1], feats.transpose(1, 2, 0))

    def test_sums_back_to_features(self):
        # oracle: summing over bins undoes the lift when dist sums to one
        rng = np.random.default_rng(3)
        feats = rng.normal(size=(5, 3, 4))
        dist = depth_distribution(rng.normal(size=(6, 3, 4))).data
        out = lift(feats, dist).data
        np.testing.assert_allclose(out.sum(axis=0), feats.transpose(1, 2, 0), rtol=1e-12, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            lift(np.zeros((2, 3, 3)), np.zeros((4, 2, 2)))


class TestSplatPool:
    @staticmethod
    def grid():
        return BevGridSpec(0, 4, 0, 4, 1.0)

    def test_additivity_same_cell(self):
        grid = self.grid()
        feats = np.array([[1.0], [2.0]])
        rows = np.array([1, 1])
        cols = np.array([2, 2])
        valid = np.array([True, True])
        out = splat_pool(feats, rows, cols, valid, grid).data
        assert out[0, 1, 2] == 3.0
        assert out.sum() == 3.0

    def test_all_invalid_gives_zero_map(self):
        grid = self.grid()
        feats = np.ones((5, 3))
        out = splat_pool(feats, np.zeros(5, int), np.zeros(5, int), np.zeros(5, bool), grid).data
        assert np.all(out == 0)

    def test_bit_equals_naive_scatter_oracle(self):
        rng = np.random.default_rng(4)
        grid = BevGridSpec(0, 16, 0, 16, 1.0)
        n, c = 10_000, 8
        feats = rng.normal(size=(n, c))
        rows = rng.integers(0, 16, size=n)
        cols = rng.integers(0, 16, size=n)
        valid = rng.random(n) > 0.1
        out = splat_pool(feats, rows, cols, valid, grid).data

        oracle = np.zeros((16, 16, c))
        for p in range(n):
            if valid[p]:
                oracle[rows[p], cols[p]] += feats[p]
        np.testing.assert_array_equal(out, oracle.transpose(2, 0, 1))

    def test_mass_conservation(self):
        rng = np.random.default_rng(5)
        grid = self.grid()
        feats = rng.normal(size=(50, 4))
        rows = rng.integers(0, 4, size=50)
        cols = rng.integers(0, 4, size=50)
        out = splat_pool(feats, rows, cols, np.ones(50, bool), grid).data
        rel = abs(out.sum() - feats.sum()) / max(abs(feats.sum()), 1e-12)
        assert rel <= 1e-5

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        grid = self.grid()
        n, c = 12, 3
        feats = rng.normal(size=(n, c))
        rows = rng.integers(0, 4, size=n)
        cols = rng.integers(0, 4, size=n)
        valid = rng.random(n) > 0.25
        wgt = rng.normal(size=(c, 4, 4))

        def loss_of(arr):
            return (splat_pool(Tensor(arr), rows, cols, valid, grid) * wgt).sum()

        t = Tensor(feats.copy(), requires_grad=True)
        (splat_pool(t, rows, cols, valid, grid) * wgt).sum().backward()

        eps = 1e-5
        for i in np.ndindex(feats.shape):
            up, dn = feats.copy(), feats.copy()
            up[i] += eps
            dn[i] -= eps
            numeric = (loss_of(up).item() - loss_of(dn).item()) / (2 * eps)
            assert abs(t.grad[i] - numeric) <= 1e-4 * max(1.0, abs(numeric))


class TestViewTransform:
    def test_single_point_path(self):
        view = forward_camera()
        bins = DepthBinSpec(1.0, 9.0, 4)
        grid = BevGridSpec(-16, 16, -16, 16, 0.5)
        c, h, w = 3, 8, 8
        feats = np.zeros((c, h, w))
        feats[:, 4, 2] = [1.0, 2.0, 3.0]
        logits = np.zeros((4, h, w))
        logits[2, 4, 2] = 60.0  # one-hot at bin 2 for the lone nonzero pixel
        out = view_transform([feats], [logits], [view], bins, grid, stride=4.0).data
        nz = np.nonzero(out.sum(axis=0))
        assert len(nz[0]) >= 1
        # locate the expected cell from the geometry directly
        template = build_frustum_template(h, w, bins, stride=4.0)
        cloud = unproject_to_ego(template, view, grid)
        rows, cols, valid = rasterize_to_cells(cloud, grid)
        assert valid[2, 4, 2]
        r, cc = rows[2, 4, 2], cols[2, 4, 2]
        np.testing.assert_allclose(out[:, r, cc], [1.0, 2.0, 3.0], rtol=1e-10)
        off_cell = out.sum() - out[:, r, cc].sum()
        assert abs(off_cell) < 1e-9 * max(1.0, abs(out.sum()))

    def test_two_identical_views_double(self):
        view = forward_camera()
        bins = DepthBinSpec(1.0, 9.0, 4)
        grid = BevGridSpec(-16, 16, -16, 16, 0.5)
        rng = np.random.default_rng(7)
        feats = rng.normal(size=(3, 8, 8))
        logits = rng.normal(size=(4, 8, 8))
        single = view_transform([feats], [logits], [view], bins, grid, stride=4.0).data
        double = view_transform([feats, feats], [logits, logits], [view, view], bins, grid, stride=4.0).data
        np.testing.assert_allclose(double, 2 * single, rtol=1e-12, atol=1e-14)

    def test_ground_plane_analytic_oracle(self):
        # one-hot depth at the true ground bin must land every pixel's
        # feature in the cell holding its analytic ray-ground intersection
        view = forward_camera(height=1.5)
        bins = DepthBinSpec(1.0, 25.0, 24)
        grid = BevGridSpec(-16, 16, -16, 16, 0.5)
        h, w = 16, 16
        stride = 2.0
        template = build_frustum_template(h, w, bins, stride=stride)
        m = view.ego_from_pixel_matrix()

        logits = np.full((24, h, w), -60.0)
        feats = np.zeros((1, h, w))
        expected_cells = set()
        for i in range(h):
            for j in range(w):
                u, v = template[0, i, j, 0], template[0, i, j, 1]
                ray = m @ np.array([u, v, 1.0])
                if ray[2] >= -1e-9:
                    continue
                depth = -view.translation[2] / ray[2]
                bin_idx, ok = bins.bin_of(np.array([depth]))
                if not ok[0]:
                    continue
                logits[bin_idx[0], i, j] = 60.0
                feats[0, i, j] = 1.0
                # the splat lands at the bin-center depth along the pixel ray
                hit = view.translation + bins.centers()[bin_idx[0]] * ray
                r, c, valid = grid.cell_of(hit[None, :])
                if valid[0]:
                    expected_cells.add((int(r[0]), int(c[0])))

        out = view_transform([feats], [logits], [view], bins, grid, stride=stride).data[0]
        got_cells = {(int(r), int(c)) for r, c in zip(*np.nonzero(out > 1e-6))}
        # transported mass must land in the analytically predicted cells
        match = len(got_cells & expected_cells) / max(len(got_cells), 1)
        assert match >= 0.99

    def test_linearity_in_features(self):
        view = forward_camera()
        bins = DepthBinSpec(1.0, 9.0, 4)
        grid = BevGridSpec(-16, 16, -16, 16, 1.0)
        rng = np.random.default_rng(8)
        f1 = rng.normal(size=(2, 8, 8))
        f2 = rng.normal(size=(2, 8, 8))
        logits = rng.normal(size=(4, 8, 8))
        a, b = 0.7, -1.3
        lhs = view_transform([a * f1 + b * f2], [logits], [view], bins, grid, stride=4.0).data
        rhs = (
            a * view_transform([f1], [logits], [view], bins, grid, stride=4.0).data
            + b * view_transform([f2], [logits], [view], bins, grid, stride=4.0).data
        )
        err = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-9)
        assert err.max() < 1e-6

    def test_view_permutation_bit_identical(self):
        bins = DepthBinSpec(1.0, 9.0, 4)
        grid = BevGridSpec(-16, 16, -16, 16, 0.5)
        rng = np.random.default_rng(9)
        views, feats, logits = [], [], []
        for yaw in (0.0, 2.1, 4.2):
            cy, sy = np.cos(yaw), np.sin(yaw)
            r = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
            rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
            k = np.array([[16.0, 0, 16], [0, 16.0, 16], [0, 0, 1.0]])
            views.append(CameraView(k, rz @ r, np.array([0.0, 0.0, 1.0])))
            feats.append(rng.normal(size=(2, 8, 8)))
            logits.append(rng.normal(size=(4, 8, 8)))
        base = view_transform(feats, logits, views, bins, grid, stride=4.0).data
        perm = [2, 0, 1]
        shuffled = view_transform(
            [feats[i] for i in perm], [logits[i] for i in perm], [views[i] for i in perm], bins, grid, stride=4.0
        ).data
        np.testing.assert_array_equal(base, shuffled)

    def test_lift_gradient_wrt_dist(self):
        rng = np.random.default_rng(10)
        feats = rng.normal(size=(2, 3, 3))
        dist0 = rng.random((4, 3, 3))
        wgt = rng.normal(size=(4, 3, 3, 2))

        t = Tensor(dist0.copy(), requires_grad=True)
        (lift(feats, t) * wgt).sum().backward()
        eps = 1e-5
        for i in np.ndindex(dist0.shape):
            up, dn = dist0.copy(), dist0.copy()
            up[i] += eps
            dn[i] -= eps
            numeric = ((lift(feats, up).data * wgt).sum() - (lift(feats, dn).data * wgt).sum()) / (2 * eps)
            assert abs(t.grad[i] - numeric) <= 1e-4 * max(1.0, abs(numeric))


class TestResizeLabels:
    def test_identity(self):
        rng = np.random.default_rng(11)
        labels = rng.integers(0, 5, size=(6, 9))
        np.testing.assert_array_equal(resize_labels(labels, (6, 9)), labels)

    def test_downscale_constant(self):
        labels = np.full((8, 8), 3)
        out = resize_labels(labels, (4, 4))
        np.testing.assert_array_equal(out, np.full((4, 4), 3))

    def test_class_set_preserved(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            h, w = rng.integers(2, 30, size=2)
            ho, wo = rng.integers(1, 40, size=2)
            labels = rng.integers(0, 7, size=(h, w))
            out = resize_labels(labels, (int(ho), int(wo)))
            assert set(np.unique(out)) <= set(np.unique(labels))


class TestMaskViewTransform:
    def test_single_labeled_pixel(self):
        view = forward_camera()
        bins = DepthBinSpec(1.0, 9.0, 4)
        grid = BevGridSpec(-16, 16, -16, 16, 0.5)
        h, w = 8, 8
        labels = np.full((h, w), -1)
        labels[4, 2] = 1
        dist = np.zeros((4, h, w))
        dist[2] = 1.0  # argmax bin 2 everywhere
        out = mask_view_transform([labels], [dist], [view], bins, grid, n_classes=3, stride=4.0)
        template = build_frustum_template(h, w, bins, stride=4.0)
        cloud = unproject_to_ego(template, view, grid)
        rows, cols, valid = rasterize_to_cells(cloud, grid)
        assert valid[2, 4, 2]
        r, c = rows[2, 4, 2], cols[2, 4, 2]
        assert out.occupancy[1, r, c] == 1.0
        assert out.occupancy.sum() == 1.0

    def test_uniform_distribution_selects_bin_zero(self):
        view = forward_camera()
        bins = DepthBinSpec(1.0, 9.0, 4)
        grid = BevGridSpec(-16, 16, -16, 16, 0.5)
        h, w = 8, 8
        labels = np.zeros((h, w), dtype=int)
        dist = np.full((4, h, w), 0.25)
        out = mask_view_transform([labels], [dist], [view], bins, grid, n_classes=2, stride=4.0)
        template = build_frustum_template(h, w, bins, stride=4.0)
        cloud = unproject_to_ego(template, view, grid)
        rows, cols, valid = rasterize_to_cells(cloud, grid)
        expected = np.zeros((2,) + grid.shape)
        np.add.at(expected[0], (rows[0][valid[0]], cols[0][valid[0]]), 1.0)
        np.testing.assert_array_equal(out.occupancy, expected)

    def test_class_id_out_of_range(self):
        view = forward_camera()
        bins = DepthBinSpec(1.0, 9.0, 2)
        grid = BevGridSpec(-16, 16, -16, 16, 1.0)
        labels = np.full((4, 4), 7)
        dist = np.full((2, 4, 4), 0.5)
        with pytest.raises(ContractViolation):
            mask_view_transform([labels], [dist], [view], bins, grid, n_classes=3, stride=8.0)

    def test_binarized_and_clamped_views(self):
        from bevda.viewtransform import DynamicBevLabels

        occ = np.array([[[0.0, 0.4], [1.0, 3.0]]])
        lab = DynamicBevLabels(occupancy=occ, tau=0.5)
        np.testing.assert_array_equal(lab.binarized, [[[False, False], [True, True]]])
        np.testing.assert_array_equal(lab.clamped, [[[0.0, 0.4], [1.0, 1.0]]])
