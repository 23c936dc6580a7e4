"""Per-class DBSCAN instance separation and the asset inventory records."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .fusion import ClassTable

NOISE = -1


@dataclass
class AssetInstance:
    class_id: int
    centroid: np.ndarray
    support: int = 0
    bbox_min: np.ndarray | None = None
    bbox_max: np.ndarray | None = None

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=float).reshape(3)
        if self.bbox_min is None:
            self.bbox_min = self.centroid.copy()
        if self.bbox_max is None:
            self.bbox_max = self.centroid.copy()
        self.bbox_min = np.asarray(self.bbox_min, dtype=float).reshape(3)
        self.bbox_max = np.asarray(self.bbox_max, dtype=float).reshape(3)


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based clustering; returns a cluster id per point, -1 for noise.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``.  Clusters are the connected components of core points,
    numbered by their lowest point index.  A border point joins the cluster
    of its lowest-index core neighbour.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels

    pairs = cKDTree(pts).query_pairs(eps, output_type="ndarray")
    a, b = (pairs[:, 0], pairs[:, 1]) if len(pairs) else (np.zeros(0, int), np.zeros(0, int))
    degree = 1 + np.bincount(a, minlength=n) + np.bincount(b, minlength=n)
    core = degree >= min_pts
    if not core.any():
        return labels

    both = core[a] & core[b]
    graph = coo_matrix((np.ones(both.sum()), (a[both], b[both])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)

    core_idx = np.flatnonzero(core)
    comps = comp[core_idx]
    # renumber components by their lowest core index (core_idx is ascending)
    uniq, first = np.unique(comps, return_index=True)
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(uniq.size)
    labels[core_idx] = rank[np.searchsorted(uniq, comps)]

    # border points: lowest-index core neighbour wins
    nearest_core = np.full(n, n, dtype=np.int64)
    for src, dst in ((a, b), (b, a)):
        sel = core[src] & ~core[dst]
        np.minimum.at(nearest_core, dst[sel], src[sel])
    border = np.flatnonzero(~core & (nearest_core < n))
    labels[border] = labels[nearest_core[border]]
    return labels


def _instance(class_id: int, members: np.ndarray) -> AssetInstance:
    return AssetInstance(
        class_id=class_id,
        centroid=members.mean(axis=0),
        support=len(members),
        bbox_min=members.min(axis=0),
        bbox_max=members.max(axis=0),
    )


def extract_instances(points: np.ndarray, labels: np.ndarray, classes: ClassTable) -> list[AssetInstance]:
    """One instance per non-noise DBSCAN cluster of every asset class."""
    pts = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    out = []
    for cls in classes.classes:
        sel = np.flatnonzero(labels == cls.class_id)
        if sel.size == 0:
            continue
        cluster = dbscan(pts[sel], cls.cluster_eps, cls.cluster_min_pts)
        for k in range(cluster.max() + 1):
            out.append(_instance(cls.class_id, pts[sel[cluster == k]]))
    return out
