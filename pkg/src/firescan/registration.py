"""Model-surface sampling and point-pair similarity registration."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .instances import AssetInstance

# Triangles per seeded substream; fixed so output does not depend on workers.
SAMPLE_CHUNK = 4096


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    tags: list[str] | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle vertex index out of range")
        if self.tags is not None and len(self.tags) != len(self.triangles):
            raise ValueError("one component tag per triangle required")

    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


def allocate_counts(areas: np.ndarray, total: int) -> np.ndarray:
    """Split ``total`` over triangles in proportion to area.

    Largest-remainder rounding: floors first, then the leftover units go to
    the largest fractional parts (lowest index first on ties).
    """
    areas = np.asarray(areas, dtype=float)
    if total <= 0:
        raise ValueError(f"total_points must be positive, got {total}")
    area_sum = areas.sum()
    if not area_sum > 0:
        raise ValueError("mesh has zero total area")
    quota = areas / area_sum * total
    counts = np.floor(quota).astype(np.int64)
    short = total - int(counts.sum())
    if short:
        order = np.lexsort((np.arange(len(quota)), -(quota - counts)))
        counts[order[:short]] += 1
    return counts


def sample_triangles(corners: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One uniform point per triangle row of ``corners`` (M, 3, 3)."""
    r1 = np.sqrt(rng.random(len(corners)))
    r2 = rng.random(len(corners))
    w0 = 1 - r1
    w1 = r1 * (1 - r2)
    w2 = r1 * r2
    return w0[:, None] * corners[:, 0] + w1[:, None] * corners[:, 1] + w2[:, None] * corners[:, 2]


def sample_surface(mesh: SurfaceMesh, total_points: int, seed: int = 0, return_index: bool = False):
    """Area-proportional uniform samples on the mesh surface.

    Returns an (total_points, 3) array, plus the source triangle of each
    sample when ``return_index`` is set.
    """
    counts = allocate_counts(mesh.areas(), total_points)
    corners = mesh.corners()
    children = np.random.SeedSequence(seed).spawn((len(corners) + SAMPLE_CHUNK - 1) // SAMPLE_CHUNK)
    pts, owners = [], []
    for k, child in enumerate(children):
        lo, hi = k * SAMPLE_CHUNK, min((k + 1) * SAMPLE_CHUNK, len(corners))
        tri = np.repeat(np.arange(lo, hi), counts[lo:hi])
        if tri.size == 0:
            continue
        pts.append(sample_triangles(corners[tri], np.random.default_rng(child)))
        owners.append(tri)
    points = np.concatenate(pts)
    if return_index:
        return points, np.concatenate(owners)
    return points


@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> scale * rotation @ p + translation``."""

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rms: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1) > 1e-9:
            raise ValueError("rotation is not a proper rotation")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, first: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ first``: apply ``first``, then ``self``."""
        return SimilarityTransform(
            scale=self.scale * first.scale,
            rotation=self.rotation @ first.rotation,
            translation=self.scale * self.rotation @ first.translation + self.translation,
        )

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m


def estimate_similarity(source: np.ndarray, target: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity mapping ``source`` points onto ``target``.

    Closed form: centre both sets, SVD of the cross-covariance, flip the
    last singular direction if the orthogonal factor is a reflection.
    """
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    dst = np.asarray(target, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise ValueError(f"{len(src)} source points but {len(dst)} targets")
    if len(src) < 3:
        raise ValueError(f"need at least 3 point pairs, got {len(src)}")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    sv = np.linalg.svd(xs, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise ValueError("source points are collinear (or coincident); rotation is undetermined")

    cov = xd.T @ xs / len(src)
    u, d, vt = np.linalg.svd(cov)
    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[-1] = -1
    rotation = u @ np.diag(s) @ vt
    var_s = np.sum(xs ** 2) / len(src)
    scale = float(np.sum(d * s) / var_s)
    translation = mu_d - scale * rotation @ mu_s
    resid = scale * src @ rotation.T + translation - dst
    rms = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
    return SimilarityTransform(scale, rotation, translation, rms)


def apply_transform(obj, transform: SimilarityTransform):
    """Map a point array or a list of instances through ``transform``."""
    if isinstance(obj, np.ndarray):
        return transform.apply(obj)
    out = []
    for inst in obj:
        if not isinstance(inst, AssetInstance):
            raise TypeError(f"cannot transform {type(inst).__name__}")
        corners = np.array([inst.bbox_min, inst.bbox_max])
        # a rotated box is re-boxed from its 8 corners
        grid = np.array([[corners[i, 0], corners[j, 1], corners[k, 2]]
                         for i in (0, 1) for j in (0, 1) for k in (0, 1)])
        moved = transform.apply(grid)
        out.append(replace(
            inst,
            centroid=transform.apply(inst.centroid),
            bbox_min=moved.min(axis=0),
            bbox_max=moved.max(axis=0),
        ))
    return out
