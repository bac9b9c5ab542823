import numpy as np
import pytest

from nidskit.analysis import (
    kde_density,
    pca_fit,
    pca_project,
    unique_row_counts,
    unique_value_counts,
)
from nidskit.dataset import DatasetTable
from nidskit.errors import SchemaMismatch
from nidskit.features import Feature, FeatureSchema
from nidskit.figures import FigureLayer, render_figure, render_metric_bars, render_metric_lines


def table_of(rows, labels, names=None):
    rows = np.asarray(rows, dtype=np.float64)
    names = names or [f"f{i}" for i in range(rows.shape[1])]
    schema = FeatureSchema("custom", tuple(Feature(n, "count", "") for n in names))
    return DatasetTable(schema, rows, np.array(labels, dtype=object))


class TestUniqueCounts:
    def test_simple_column(self):
        t = table_of([[1.0], [1.0], [2.0]], ["Bot", "Bot", "Bot"])
        assert unique_value_counts(t, ["f0"]) == {"Bot": {"f0": 2}}

    def test_single_repeated_instance(self):
        t = table_of([[5.0, 1.0]] * 10, ["Bot"] * 10)
        counts = unique_value_counts(t, ["f0", "f1"])
        assert counts["Bot"] == {"f0": 1, "f1": 1}

    def test_matches_sort_dedup_oracle(self):
        rng = np.random.default_rng(0)
        rows = rng.integers(0, 5, size=(200, 3)).astype(float)
        labels = rng.choice(["A", "B", "Benign"], size=200)
        t = table_of(rows, labels)
        counts = unique_value_counts(t, ["f0", "f1", "f2"])
        for lab in set(labels.tolist()):
            subset = rows[labels == lab]
            for j, name in enumerate(["f0", "f1", "f2"]):
                assert counts[lab][name] == len(sorted(set(subset[:, j].tolist())))

    def test_distinct_full_rows(self):
        rows = np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 3.0]])
        t = table_of(rows, ["Bot"] * 3)
        assert unique_row_counts(t) == {"Bot": 2}


class TestKde:
    def test_standard_normal_integral_within_2_percent(self):
        rng = np.random.default_rng(1)
        grid = kde_density(rng.normal(size=(10_000, 2)), resolution=200)
        assert grid.mode == "kde"
        assert abs(grid.integral() - 1.0) <= 0.02

    def test_single_point_scatter_mode(self):
        grid = kde_density(np.array([[3.0, 4.0]]))
        assert grid.mode == "scatter"
        assert grid.bandwidth is None

    def test_zero_variance_axis_scatter_mode(self):
        pts = np.column_stack([np.ones(50), np.linspace(0, 1, 50)])
        assert kde_density(pts).mode == "scatter"

    def test_perfectly_correlated_scatter_mode(self):
        x = np.linspace(0, 1, 50)
        assert kde_density(np.column_stack([x, 2 * x + 1])).mode == "scatter"
        # any two distinct points are perfectly correlated
        assert kde_density(np.array([[0.0, 0.0], [10.0, 10.0]])).mode == "scatter"

    def test_symmetric_points_symmetric_density(self):
        # replicated so the bandwidth is small against the separation;
        # a bare pair cannot be kde-mode (two points are always perfectly
        # correlated, hitting the degenerate rule)
        corners = np.array([[-5.0, -1.0], [-5.0, 1.0], [5.0, -1.0], [5.0, 1.0]])
        pts = np.tile(corners, (50, 1))
        grid = kde_density(pts, resolution=101)
        assert grid.mode == "kde"
        v = grid.values
        assert v == pytest.approx(v[::-1, :], rel=1e-9)  # mirror in x
        assert v == pytest.approx(v[:, ::-1], rel=1e-9)  # mirror in y
        # argmax cells sit at the sample locations
        i, j = np.unravel_index(np.argmax(v), v.shape)
        gx = np.linspace(grid.x_range[0], grid.x_range[1], grid.resolution)
        gy = np.linspace(grid.y_range[0], grid.y_range[1], grid.resolution)
        assert min(abs(gx[i] - px) for px in (-5.0, 5.0)) < 0.3
        assert min(abs(gy[j] - py) for py in (-1.0, 1.0)) < 0.3

    def test_density_positive_at_samples(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(100, 2))
        grid = kde_density(pts, resolution=50)
        assert np.all(grid.values >= 0.0)
        gx = np.linspace(grid.x_range[0], grid.x_range[1], 50)
        gy = np.linspace(grid.y_range[0], grid.y_range[1], 50)
        for x, y in pts[:10]:
            i = int(np.argmin(np.abs(gx - x)))
            j = int(np.argmin(np.abs(gy - y)))
            assert grid.values[i, j] > 0.0

    def test_scott_bandwidth(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(500, 2)) * np.array([2.0, 0.5])
        grid = kde_density(pts)
        factor = 500 ** (-1.0 / 6.0)
        assert np.sqrt(grid.bandwidth[0, 0]) == pytest.approx(pts[:, 0].std() * factor)
        assert np.sqrt(grid.bandwidth[1, 1]) == pytest.approx(pts[:, 1].std() * factor)


class TestPca:
    def test_line_explains_everything(self):
        x = np.linspace(0, 1, 100)
        proj = pca_fit(np.column_stack([x, 2 * x]))
        assert proj.explained[0] == pytest.approx(1.0, abs=1e-12)
        assert proj.explained[1] == pytest.approx(0.0, abs=1e-12)

    def test_isotropic_split_evenly(self):
        theta = np.linspace(0, 2 * np.pi, 721)[:-1]
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        proj = pca_fit(pts)
        assert proj.explained[0] == pytest.approx(0.5, abs=1e-9)
        assert proj.explained[1] == pytest.approx(0.5, abs=1e-9)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(4)
        proj = pca_fit(rng.normal(size=(200, 6)))
        eye = proj.components @ proj.components.T
        assert np.allclose(eye, np.eye(2), atol=1e-10)

    def test_rank2_reconstruction(self):
        rng = np.random.default_rng(5)
        basis = rng.normal(size=(2, 5))
        coords = rng.normal(size=(100, 2))
        X = coords @ basis + 3.0
        proj = pca_fit(X)
        Z = pca_project(X, proj)
        rebuilt = Z @ proj.components + proj.mean
        assert np.allclose(rebuilt, X, atol=1e-8)

    def test_row_order_invariance(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(150, 4))
        proj_a = pca_fit(X)
        proj_b = pca_fit(X[::-1])
        assert np.allclose(proj_a.components, proj_b.components, atol=1e-10)
        assert np.allclose(pca_project(X, proj_a), pca_project(X, proj_b), atol=1e-10)

    def test_schema_mismatch_on_projection(self):
        t1 = table_of(np.random.default_rng(7).normal(size=(30, 3)), ["Benign"] * 30)
        t2 = table_of(np.random.default_rng(8).normal(size=(30, 2)), ["Benign"] * 30)
        proj = pca_fit(t1)
        with pytest.raises(SchemaMismatch):
            pca_project(t2, proj)

    def test_explained_non_increasing(self):
        rng = np.random.default_rng(9)
        proj = pca_fit(rng.normal(size=(100, 5)) * np.array([5, 3, 1, 1, 1]))
        assert proj.explained[0] >= proj.explained[1] >= 0.0


class TestFigures:
    def _layers(self):
        rng = np.random.default_rng(10)
        kde = kde_density(rng.normal(size=(200, 2)), resolution=60)
        scatter = kde_density(np.array([[9.0, 9.0]]))
        return [FigureLayer("setA", kde), FigureLayer("setB", scatter)]

    def test_byte_identical_rerender(self):
        layers = self._layers()
        a = render_figure(layers, title="t", xlabel="x", ylabel="y")
        b = render_figure(layers, title="t", xlabel="x", ylabel="y")
        assert a == b
        assert a.startswith(b"<?xml")

    def test_legend_states_representation_per_layer(self):
        svg = render_figure(self._layers())
        assert b"setA (kde)" in svg
        assert b"setB (scatter)" in svg

    def test_empty_layers_rejected(self):
        with pytest.raises(ValueError):
            render_figure([])

    def test_bar_and_line_charts_deterministic(self):
        bars_a = render_metric_bars(["a->a", "a->b"], {"dt": [0.9, 0.1], "rf": [0.95, 0.2]}, "MCC")
        bars_b = render_metric_bars(["a->a", "a->b"], {"dt": [0.9, 0.1], "rf": [0.95, 0.2]}, "MCC")
        assert bars_a == bars_b
        lines_a = render_metric_lines([1, 2, 5], {"a->a": [0.3, 0.6, 0.9]}, "k", "MCC")
        lines_b = render_metric_lines([1, 2, 5], {"a->a": [0.3, 0.6, 0.9]}, "k", "MCC")
        assert lines_a == lines_b
