import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firescan.fusion import AssetClass, ClassTable
from firescan.instances import NOISE, AssetInstance, dbscan, extract_instances

EXTINGUISHER = 1


def dbscan_oracle(points, eps, min_pts):
    """Dense distance matrix, union-find over cores, then the border rule."""
    n = len(points)
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    nbr = d <= eps
    core = nbr.sum(1) >= min_pts
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if core[i] and core[j] and nbr[i, j]:
                ri, rj = find(i), find(j)
                parent[max(ri, rj)] = min(ri, rj)
    labels = [NOISE] * n
    ids = {}
    for i in range(n):
        if core[i]:
            labels[i] = ids.setdefault(find(i), len(ids))
    for i in range(n):
        if not core[i]:
            cores = [j for j in range(n) if core[j] and nbr[i, j]]
            if cores:
                labels[i] = labels[min(cores)]
    return labels


def blobs(rng, centers, n_each, sigma):
    return np.concatenate([c + sigma * rng.normal(size=(n_each, 3)) for c in centers])


class TestDBSCAN:
    def test_two_separated_blobs(self):
        rng = np.random.default_rng(0)
        eps = 0.3
        pts = blobs(rng, [np.zeros(3), np.array([10 * eps, 0, 0])], 50, 0.03)
        labels = dbscan(pts, eps, 10)
        assert labels[:50].tolist() == [0] * 50
        assert labels[50:].tolist() == [1] * 50

    def test_all_noise(self):
        pts = np.arange(5)[:, None] * np.array([[1.0, 0, 0]])
        assert dbscan(pts, 0.3, 2).tolist() == [NOISE] * 5

    def test_single_point_min_pts_one(self):
        assert dbscan(np.zeros((1, 3)), 0.3, 1).tolist() == [0]

    def test_empty(self):
        assert dbscan(np.zeros((0, 3)), 0.3, 3).size == 0

    def test_chain_is_one_cluster(self):
        pts = np.arange(20)[:, None] * np.array([[0.2, 0, 0]])
        assert set(dbscan(pts, 0.25, 3)) == {0}

    def test_border_goes_to_lowest_core(self):
        # point 4 sits between two cores of different clusters
        pts = np.array([[0, 0, 0], [-0.1, 0, 0], [-0.2, 0, 0],
                        [2, 0, 0], [1.0, 0, 0], [2.1, 0, 0], [2.2, 0, 0.0]])
        pts[4] = [0.6, 0, 0]
        got = dbscan(pts, 0.6, 3)
        assert got.tolist() == dbscan_oracle(pts, 0.6, 3)

    @pytest.mark.parametrize("kwargs", [{"eps": 0, "min_pts": 3}, {"eps": 0.3, "min_pts": 0}])
    def test_rejects_bad_params(self, kwargs):
        with pytest.raises(ValueError):
            dbscan(np.zeros((3, 3)), **kwargs)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.floats(0.05, 0.8), st.integers(1, 12))
    def test_matches_oracle(self, seed, n, eps, min_pts):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 3, (n, 3))
        assert dbscan(pts, eps, min_pts).tolist() == dbscan_oracle(pts, eps, min_pts)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_rigid_motion_equivariant(self, seed):
        rng = np.random.default_rng(seed)
        pts = blobs(rng, rng.uniform(-2, 2, (4, 3)), 30, 0.1)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        moved = pts @ q.T + rng.uniform(-100, 100, 3)
        assert dbscan(pts, 0.25, 5).tolist() == dbscan(moved, 0.25, 5).tolist()

    def test_labels_cover_range(self):
        rng = np.random.default_rng(3)
        labels = dbscan(rng.uniform(0, 4, (400, 3)), 0.4, 4)
        ids = set(labels.tolist()) - {NOISE}
        assert ids == set(range(len(ids)))


def one_class_table(eps=0.3, min_pts=10):
    return ClassTable(tuple(AssetClass(i, f"c{i}", 2.0, eps, min_pts) for i in range(1, 16)))


class TestExtract:
    def test_adjacent_pair_merges(self):
        # two extinguishers 0.2 m apart with eps 0.3 become one instance
        rng = np.random.default_rng(1)
        pts = blobs(rng, [np.zeros(3), np.array([0.2, 0, 0])], 40, 0.02)
        inst = extract_instances(pts, np.full(len(pts), EXTINGUISHER), one_class_table())
        assert len(inst) == 1
        assert inst[0].support == 80

    def test_centroid_is_member_mean(self):
        rng = np.random.default_rng(2)
        pts = blobs(rng, [np.array([1.0, 2, 3])], 60, 0.05)
        labels = np.full(60, 4)
        noise = np.array([[50.0, 50, 50]])
        inst = extract_instances(np.vstack([pts, noise]), np.append(labels, 4), one_class_table())
        assert len(inst) == 1
        np.testing.assert_allclose(inst[0].centroid, pts.mean(0), atol=1e-12)
        np.testing.assert_allclose(inst[0].bbox_min, pts.min(0))
        np.testing.assert_allclose(inst[0].bbox_max, pts.max(0))

    def test_classes_clustered_separately(self):
        rng = np.random.default_rng(4)
        pts = blobs(rng, [np.zeros(3)], 60, 0.05)
        labels = np.array([2] * 30 + [9] * 30)
        inst = extract_instances(pts, labels, one_class_table(min_pts=5))
        assert sorted(i.class_id for i in inst) == [2, 9]

    def test_background_ignored(self):
        pts = np.zeros((20, 3))
        assert extract_instances(pts, np.zeros(20, int), one_class_table()) == []

    def test_per_class_parameters(self):
        pts = np.arange(6)[:, None] * np.array([[0.5, 0, 0]])
        classes = list(one_class_table().classes)
        classes[0] = AssetClass(1, "loose", 2.0, 0.6, 2)
        inst = extract_instances(pts, np.ones(6, int), ClassTable(tuple(classes)))
        assert len(inst) == 1 and inst[0].support == 6
        inst = extract_instances(pts, np.full(6, 2), ClassTable(tuple(classes)))
        assert inst == []

    def test_instance_defaults_bbox(self):
        inst = AssetInstance(3, [1, 2, 3])
        assert inst.bbox_min.tolist() == [1, 2, 3] and inst.bbox_max.tolist() == [1, 2, 3]
