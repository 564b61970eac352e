import math
import re

import numpy as np
import pytest

from stylecast.projection import (
    LayoutPoint, ProjectionError, cast_latent, emit_scatter_svg, fuzzy_knn_graph,
    optimize_layout, project_latents, read_latents, write_latents,
)


def gaussian_clusters(n_per=60, d=32, sep=10.0, seed=0, centers=3):
    rng = np.random.default_rng(seed)
    pts, labels = [], []
    for c in range(centers):
        center = np.zeros(d)
        center[c] = sep
        pts.append(rng.standard_normal((n_per, d)) + center)
        labels += [c] * n_per
    return np.vstack(pts), labels


def knn_purity(points: list[LayoutPoint], k: int = 10) -> float:
    xy = np.array([[p.x, p.y] for p in points])
    labels = np.array([p.label for p in points])
    d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    purities = []
    for i in range(len(points)):
        nn = np.argpartition(d[i], k)[:k]
        purities.append((labels[nn] == labels[i]).mean())
    return float(np.mean(purities))


class TestFuzzyGraph:
    def test_nearest_neighbor_weight_is_one(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((20, 4))
        g = fuzzy_knn_graph(pts, k=5)
        # column 0 holds each node's nearest neighbor (d == rho)
        assert np.allclose(g.weights[:, 0], 1.0)

    def test_duplicate_pair_mutual_weight_one(self):
        pts = np.vstack([np.zeros(3), np.zeros(3),
                         np.random.default_rng(2).standard_normal((8, 3)) + 5.0])
        g = fuzzy_knn_graph(pts, k=3)
        sym = {(i, j): w for i, j, w in g.sym_edges}
        assert abs(sym[(0, 1)] - 1.0) < 1e-12

    def test_three_collinear_points_bisection_oracle(self):
        pts = np.array([[0.0], [1.0], [2.0]])
        g = fuzzy_knn_graph(pts, k=2)
        target = math.log2(2)
        for i in range(3):
            nd = np.sort(np.abs(pts[:, 0] - pts[i, 0]))[1:3]
            rho = nd.min()
            attainable = (nd == rho).sum() <= target
            psum = float(np.exp(-np.maximum(nd - g.rhos[i], 0.0) / g.sigmas[i]).sum())
            if attainable:  # end nodes: constraint met within 1e-5
                assert abs(psum - target) < 1e-5, f"node {i}: {psum}"
            else:           # middle node: both neighbors tie at rho, sum is pinned at 2
                assert abs(psum - 2.0) < 1e-12

    def test_sigma_constraint_random_data(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((40, 8))
        k = 6
        g = fuzzy_knn_graph(pts, k)
        target = math.log2(k)
        for i in range(40):
            idx = g.neighbors[i]
            nd = np.sqrt(((pts[idx] - pts[i]) ** 2).sum(-1))
            psum = float(np.exp(-np.maximum(nd - g.rhos[i], 0.0) / g.sigmas[i]).sum())
            assert abs(psum - target) < 1e-5

    def test_all_weights_in_unit_interval(self):
        rng = np.random.default_rng(4)
        g = fuzzy_knn_graph(rng.standard_normal((30, 5)), k=4)
        assert np.all(g.weights > 0.0) and np.all(g.weights <= 1.0)
        ws = np.array([w for _, _, w in g.sym_edges])
        assert np.all(ws > 0.0) and np.all(ws <= 1.0 + 1e-12)

    def test_degree_pre_symmetrization(self):
        rng = np.random.default_rng(5)
        g = fuzzy_knn_graph(rng.standard_normal((25, 3)), k=4)
        assert g.neighbors.shape == (25, 4)

    def test_too_few_points(self):
        with pytest.raises(ProjectionError):
            fuzzy_knn_graph(np.zeros((3, 2)), k=3)
        with pytest.raises(ProjectionError):
            fuzzy_knn_graph(np.zeros((10, 2)), k=1)


class TestLayout:
    def test_two_points_converge_close(self):
        pts = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0],
                        [100.0, 100.0, 100.0], [100.0, 100.0, 100.0],
                        [200.0, 0.0, 100.0], [200.0, 0.0, 100.0]])
        g = fuzzy_knn_graph(pts, k=2)
        points = optimize_layout(g, epochs=300, seed=1)
        d01 = math.dist((points[0].x, points[0].y), (points[1].x, points[1].y))
        assert d01 < 0.2  # below 2 * min_dist for the a=1.58, b=0.9 curve

    def test_cluster_purity(self):
        pts, labels = gaussian_clusters(n_per=60)
        g = fuzzy_knn_graph(pts, k=10)
        points = optimize_layout(g, epochs=150, seed=2, labels=labels)
        assert knn_purity(points, k=10) >= 0.9

    def test_same_seed_identical_layout(self):
        pts, labels = gaussian_clusters(n_per=25, centers=2)
        g = fuzzy_knn_graph(pts, k=5)
        a = optimize_layout(g, epochs=50, seed=7, labels=labels)
        b = optimize_layout(g, epochs=50, seed=7, labels=labels)
        assert all((p.x, p.y) == (q.x, q.y) for p, q in zip(a, b))

    def test_empty_graph_rejected(self):
        from stylecast.projection import FuzzyGraph
        empty = FuzzyGraph(n=0, k=2, neighbors=np.zeros((0, 2), dtype=np.int64),
                           weights=np.zeros((0, 2)), rhos=np.zeros(0), sigmas=np.zeros(0),
                           sym_edges=[])
        with pytest.raises(ProjectionError):
            optimize_layout(empty)


@pytest.fixture(scope="module")
def projected():
    pts, labels = gaussian_clusters(n_per=40, centers=3, seed=8)
    return pts, labels, project_latents(pts, labels, k=8, epochs=120, seed=3)


class TestCast:
    def test_training_latent_lands_on_its_cluster(self, projected):
        pts, labels, result = projected
        probe = cast_latent(pts[5], result)
        assert probe.is_overlay
        centroids = []
        for c in range(3):
            xs = [p.x for p, l in zip(result.points, labels) if l == c]
            ys = [p.y for p, l in zip(result.points, labels) if l == c]
            centroids.append((np.mean(xs), np.mean(ys)))
        dists = [math.dist((probe.x, probe.y), c) for c in centroids]
        assert int(np.argmin(dists)) == labels[5]
        # weight concentration: the duplicate point dominates the interpolation
        own = math.dist((probe.x, probe.y), (result.points[5].x, result.points[5].y))
        others = [math.dist((centroids[c][0], centroids[c][1]), centroids[labels[5]])
                  for c in range(3) if c != labels[5]]
        assert own < min(others)

    def test_overlay_inside_convex_hull(self, projected):
        pts, labels, result = projected
        probe = cast_latent(pts[50] + 0.1, result)
        xs = [p.x for p in result.points]
        ys = [p.y for p in result.points]
        assert min(xs) - 1e-9 <= probe.x <= max(xs) + 1e-9
        assert min(ys) - 1e-9 <= probe.y <= max(ys) + 1e-9

    def test_cast_on_empty_layout_rejected(self):
        from stylecast.projection import ProjectionResult
        empty = ProjectionResult(points=[], latents=np.zeros((0, 4)), k=5)
        with pytest.raises(ProjectionError):
            cast_latent(np.zeros(4), empty)


class TestLatentFile:
    def test_round_trip(self, tmp_path):
        arr = np.random.default_rng(9).standard_normal((7, 5)).astype(np.float32)
        p = tmp_path / "lat.bin"
        write_latents(p, arr)
        back = read_latents(p)
        assert back.shape == (7, 5)
        assert np.array_equal(back, arr)

    def test_header_matches_spec(self, tmp_path):
        arr = np.ones((3, 4), dtype=np.float32)
        p = tmp_path / "lat.bin"
        write_latents(p, arr)
        blob = p.read_bytes()
        assert np.array_equal(np.frombuffer(blob[:8], dtype="<u4"), [3, 4])
        assert len(blob) == 8 + 3 * 4 * 4

    def test_truncated_rejected(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(np.array([5, 5], dtype="<u4").tobytes() + b"\x00" * 8)
        with pytest.raises(ProjectionError):
            read_latents(p)


class TestSvg:
    def points(self, n=10, overlays=1):
        rng = np.random.default_rng(10)
        pts = [LayoutPoint(float(x), float(y), int(l))
               for x, y, l in zip(rng.uniform(0, 1, n), rng.uniform(0, 1, n),
                                  rng.integers(0, 3, n))]
        for _ in range(overlays):
            pts.append(LayoutPoint(0.5, 0.5, -1, is_overlay=True))
        return pts

    def test_one_circle_per_point(self, tmp_path):
        pts = self.points(12, overlays=0)
        out = tmp_path / "s.svg"
        emit_scatter_svg(pts, ["a", "b", "c"], out)
        svg = out.read_text()
        # scatter circles separate from the 3 legend swatches
        assert svg.count("<circle") == 12 + 3
        assert svg.startswith("<svg")

    def test_overlay_black_and_painted_last(self, tmp_path):
        pts = self.points(6, overlays=1)
        out = tmp_path / "s.svg"
        emit_scatter_svg(pts, ["a", "b", "c"], out)
        svg = out.read_text()
        circles = re.findall(r'<circle[^>]*r="3"[^>]*>', svg)
        assert len(circles) == 7
        assert 'fill="#000000"' in circles[-1]

    def test_single_point_centered(self, tmp_path):
        out = tmp_path / "s.svg"
        emit_scatter_svg([LayoutPoint(3.0, 4.0, 0)], ["only"], out)
        svg = out.read_text()
        m = re.search(r'<circle cx="([\d.]+)" cy="([\d.]+)" r="3"', svg)
        assert (float(m.group(1)), float(m.group(2))) == (500.0, 500.0)

    def test_legend_names_escaped(self, tmp_path):
        out = tmp_path / "s.svg"
        emit_scatter_svg(self.points(4, 0), ["a&b", "x<y", "z"], out)
        svg = out.read_text()
        assert "a&amp;b" in svg and "x&lt;y" in svg

    def test_well_formed_xml(self, tmp_path):
        import xml.etree.ElementTree as ET
        out = tmp_path / "s.svg"
        emit_scatter_svg(self.points(8, 2), ["a", "b", "c"], out)
        root = ET.fromstring(out.read_text())
        assert root.tag.endswith("svg")
        assert root.get("viewBox") == "0 0 1000 1000"

    def test_no_points_rejected(self, tmp_path):
        with pytest.raises(ProjectionError):
            emit_scatter_svg([], ["a"], tmp_path / "s.svg")
