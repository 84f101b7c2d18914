import numpy as np
import pytest

from covis.clustering import NOISE, DbscanParams, cluster_sizes, dbscan, default_eps
from covis.core import ImageMeta

from .oracles import dbscan_reference, partitions_equal


class TestDbscanExamples:
    def test_two_triangles(self):
        pts = np.array([(0, 0), (0, 1), (1, 0), (10, 10), (10, 11), (11, 10)], float)
        labels = dbscan(pts, DbscanParams(eps=2.0, min_pts=3))
        assert labels.tolist() == [0, 0, 0, 1, 1, 1]

    def test_lone_point_is_noise(self):
        labels = dbscan(np.array([(0.0, 0.0)]), DbscanParams(eps=1.0, min_pts=2))
        assert labels.tolist() == [NOISE]

    def test_coincident_points_cluster(self):
        pts = np.zeros((3, 2))
        labels = dbscan(pts, DbscanParams(eps=0.1, min_pts=3))
        assert labels.tolist() == [0, 0, 0]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dbscan(np.empty((0, 2)), DbscanParams(eps=1.0, min_pts=1))

    def test_closed_ball_boundary(self):
        # Distance exactly eps counts as a neighbor.
        pts = np.array([(0.0, 0.0), (2.0, 0.0), (4.0, 0.0)])
        labels = dbscan(pts, DbscanParams(eps=2.0, min_pts=3))
        assert labels.tolist() == [0, 0, 0]

    def test_border_tie_goes_to_first_cluster(self):
        # Two dense groups share one border point equidistant from both;
        # the cluster whose expansion runs first (lower id) claims it.
        left = [(0.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
        right = [(6.0, 0.0), (6.0, 1.0), (6.0, -1.0)]
        border = [(3.0, 0.0)]
        pts = np.array(left + right + border)
        labels = dbscan(pts, DbscanParams(eps=3.0, min_pts=4))
        assert labels[6] == labels[0] == 0
        assert labels[3] == 1


class TestDbscanProperties:
    def test_oracle_equivalence_random(self, rng):
        for _ in range(40):
            n = int(rng.integers(1, 120))
            pts = rng.uniform(0, 50, size=(n, 2))
            eps = float(rng.uniform(0.5, 8.0))
            min_pts = int(rng.integers(1, 8))
            got = dbscan(pts, DbscanParams(eps=eps, min_pts=min_pts))
            want = dbscan_reference(pts, eps, min_pts)
            assert partitions_equal(got, want), (n, eps, min_pts)
            # Stronger: the deterministic tie-break makes ids identical too.
            assert np.array_equal(got, want)

    def test_partition_and_core_consistency(self, rng):
        pts = rng.uniform(0, 30, size=(150, 2))
        params = DbscanParams(eps=2.5, min_pts=4)
        labels = dbscan(pts, params)
        assert len(labels) == len(pts)

        d2 = ((pts[:, None] - pts[None, :]) ** 2).sum(axis=2)
        within = d2 <= params.eps**2
        core = within.sum(axis=1) >= params.min_pts
        # Every point near a core point belongs to some cluster, never noise.
        for i in np.nonzero(core)[0]:
            assert labels[i] >= 0
            assert (labels[within[i]] >= 0).all()

    def test_determinism(self, rng):
        pts = rng.uniform(0, 10, size=(200, 2))
        params = DbscanParams(eps=1.0, min_pts=3)
        a = dbscan(pts, params)
        b = dbscan(pts.copy(), params)
        assert np.array_equal(a, b)

    def test_grid_cells_do_not_split_neighbors(self):
        # Points straddling grid-cell boundaries at exactly eps apart.
        pts = np.array([(0.999, 0.0), (1.001, 0.0), (2.0, 0.0)])
        labels = dbscan(pts, DbscanParams(eps=1.0, min_pts=2))
        assert (labels >= 0).all()


class TestDefaultEps:
    def test_examples(self):
        m1 = ImageMeta("a", 640, 480)
        m2 = ImageMeta("b", 1600, 1200)
        e1, e2 = default_eps(m1, m2, 0.04)
        assert e1 == pytest.approx(32.0)
        assert e2 == pytest.approx(80.0)
        e3, _ = default_eps(ImageMeta("c", 100, 100), m1, 0.1)
        assert e3 == pytest.approx(14.142135623, abs=1e-6)

    def test_bad_factor(self):
        m = ImageMeta("a", 10, 10)
        with pytest.raises(ValueError):
            default_eps(m, m, 0.0)


def test_cluster_sizes():
    labels = np.array([0, 0, 1, NOISE, 1, 1])
    assert cluster_sizes(labels) == {0: 2, 1: 3}
