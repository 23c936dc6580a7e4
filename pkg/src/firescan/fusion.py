"""Per-face mask rectification and class priority voting (CPV) merge."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import FaceSpec, face_lookup_table

DEFAULT_CLASS_NAMES = (
    "fire extinguisher",
    "fire exit sign",
    "fire door sign",
    "fire alarm",
    "emergency light",
    "smoke detector",
    "fire hose reel",
    "piping system",
    "sprinkler",
    "fire call point",
    "emergency door release",
    "fire blanket",
    "fire equipment sign",
    "firefighting lift switch",
    "hidden fire equipment",
)


@dataclass(frozen=True)
class AssetClass:
    class_id: int
    name: str
    vote_weight: float = 2.0
    cluster_eps: float = 0.3
    cluster_min_pts: int = 10


@dataclass(frozen=True)
class ClassTable:
    """Asset classes with ids 1..n; id 0 is the implicit background."""

    classes: tuple[AssetClass, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ids = [c.class_id for c in self.classes]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"class ids must be contiguous from 1, got {ids}")
        for c in self.classes:
            if not c.vote_weight > 0:
                raise ValueError(f"class {c.name!r}: vote weight must be positive")
            if not c.cluster_eps > 0 or c.cluster_min_pts < 1:
                raise ValueError(f"class {c.name!r}: invalid clustering parameters")

    @classmethod
    def default(cls, vote_weight: float = 2.0, eps: float = 0.3, min_pts: int = 10) -> "ClassTable":
        return cls(tuple(
            AssetClass(i + 1, name, vote_weight, eps, min_pts)
            for i, name in enumerate(DEFAULT_CLASS_NAMES)
        ))

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def __getitem__(self, class_id: int) -> AssetClass:
        return self.classes[class_id - 1]

    def name(self, class_id: int) -> str:
        return "background" if class_id == 0 else self[class_id].name

    def weights(self) -> np.ndarray:
        """Vote weights indexed by class id, background fixed at 1."""
        return np.array([1.0] + [c.vote_weight for c in self.classes])


def suppress_regions(labels: np.ndarray, suppression: np.ndarray) -> np.ndarray:
    """Force every pixel flagged in ``suppression`` (nonzero) to background."""
    if labels.shape != suppression.shape:
        raise ValueError(
            f"suppression raster {suppression.shape} does not match mask {labels.shape}"
        )
    out = labels.copy()
    out[suppression != 0] = 0
    return out


def cpv_labels(counts: np.ndarray) -> np.ndarray:
    """Resolve per-pixel vote counts (..., num_classes + 1) into labels.

    The most-voted class wins, ties going to the lowest id.  A background
    winner is replaced by the most-voted asset class whenever any asset vote
    exists.
    """
    best = np.argmax(counts, axis=-1)
    if counts.shape[-1] > 1:
        asset = counts[..., 1:]
        best_asset = np.argmax(asset, axis=-1) + 1
        has_asset = asset.max(axis=-1) > 0
        best = np.where((best == 0) & has_asset, best_asset, best)
    return best


def merge_faces_cpv(
    faces: Iterable[tuple[FaceSpec, np.ndarray]],
    num_classes: int,
    width: int,
    height: int,
) -> np.ndarray:
    """Merge rectilinear label masks of one frame into an equirect mask.

    Every face covering an equirect pixel casts one vote with its label at
    the corresponding face pixel.  Pixels no face covers stay background.
    """
    if width != 2 * height or height <= 0:
        raise ValueError(f"equirect mask must have W = 2H > 0, got {width}x{height}")
    nc = num_classes + 1
    counts = np.zeros(height * width * nc, dtype=np.uint16)
    for spec, labels in faces:
        if labels.shape != (spec.resolution, spec.resolution):
            raise ValueError(
                f"face {spec.ring}/{spec.index}: mask shape {labels.shape} "
                f"!= {spec.resolution}x{spec.resolution}"
            )
        if labels.size and int(labels.max()) > num_classes:
            raise ValueError(f"face {spec.ring}/{spec.index}: label {labels.max()} > {num_classes}")
        eq_idx, face_idx = face_lookup_table(spec, width, height)
        votes = labels.ravel()[face_idx].astype(np.int64)
        np.add.at(counts, eq_idx * nc + votes, 1)
    return cpv_labels(counts.reshape(height, width, nc)).astype(np.uint8)


def stack_counts(label_lists: Sequence[Sequence[int]], num_classes: int) -> np.ndarray:
    """Vote-count rows from explicit per-pixel vote lists (small helper)."""
    counts = np.zeros((len(label_lists), num_classes + 1), dtype=np.int64)
    for i, votes in enumerate(label_lists):
        for c in votes:
            counts[i, c] += 1
    return counts
