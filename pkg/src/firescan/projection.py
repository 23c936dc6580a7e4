"""Radius-limited spherical projection of a point cloud and per-point voting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fusion import ClassTable

DEFAULT_RADIUS = 5.0


def check_rotation(r: np.ndarray, tol: float = 1e-9, what: str = "rotation") -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"{what} must be 3x3, got {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol) or abs(np.linalg.det(r) - 1) > tol:
        raise ValueError(f"{what} is not a proper rotation")
    return r


@dataclass(frozen=True)
class CameraPose:
    """Camera position and camera-to-world orientation for one frame."""

    frame_id: str
    position: np.ndarray
    orientation: np.ndarray
    image: str = ""

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        # SfM exports carry ~1e-7 rounding in rotations; accept that, the
        # projection itself only needs R^T.
        object.__setattr__(
            self, "orientation",
            check_rotation(self.orientation, tol=1e-6, what=f"pose {self.frame_id} orientation"),
        )

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """World points (N, 3) expressed in the camera frame."""
        return (np.asarray(points, dtype=float) - self.position) @ self.orientation


def points_in_radius(points: np.ndarray, pose: CameraPose, radius: float) -> np.ndarray:
    """Indices of points within ``radius`` (inclusive) of the camera."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    d2 = np.sum((np.asarray(points, dtype=float) - pose.position) ** 2, axis=1)
    return np.flatnonzero(d2 <= radius * radius)


def spherical_focal(width: int) -> float:
    return width / (2 * math.pi)


def project_spherical(points_cam: np.ndarray, width: int, height: int):
    """Equirect pixel coordinates of camera-frame points.

    ``u = W/2 + f atan2(x, z)``, ``v = H/2 + f atan2(y, hypot(x, z))`` with
    ``f = W / (2 pi)``; u wraps into [0, W), v clamps into [0, H-1].
    """
    p = np.asarray(points_cam, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if np.any((x == 0) & (y == 0) & (z == 0)):
        raise ValueError("cannot project a point located at the camera centre")
    f = spherical_focal(width)
    u = 0.5 * width + f * np.arctan2(x, z)
    v = 0.5 * height + f * np.arctan2(y, np.hypot(x, z))
    return np.mod(u, width), np.clip(v, 0, height - 1)


def project_point_spherical(p_world, pose: CameraPose, width: int, height: int):
    u, v = project_spherical(pose.to_camera(np.asarray(p_world, dtype=float)[None]), width, height)
    return float(u[0]), float(v[0])


def pixel_index(u: np.ndarray, v: np.ndarray, width: int, height: int):
    """Nearest raster indices for continuous projected coordinates."""
    col = np.floor(u + 0.5).astype(np.int64) % width
    row = np.clip(np.floor(v + 0.5).astype(np.int64), 0, height - 1)
    return row, col


def frame_votes(points: np.ndarray, pose: CameraPose, mask: np.ndarray, radius: float):
    """``(indices, labels)``: in-radius points and the class under each."""
    height, width = mask.shape
    idx = points_in_radius(points, pose, radius)
    if idx.size == 0:
        return idx, np.zeros(0, dtype=np.int64)
    cam = pose.to_camera(points[idx])
    nonzero = np.any(cam != 0, axis=1)
    idx, cam = idx[nonzero], cam[nonzero]
    u, v = project_spherical(cam, width, height)
    row, col = pixel_index(u, v, width, height)
    return idx, mask[row, col].astype(np.int64)


def new_vote_table(n_points: int, num_classes: int) -> np.ndarray:
    return np.zeros((n_points, num_classes + 1), dtype=np.int32)


def accumulate_frame_votes(
    points: np.ndarray,
    pose: CameraPose,
    mask: np.ndarray,
    radius: float,
    votes: np.ndarray,
) -> np.ndarray:
    """Add one frame's votes into ``votes`` (modified in place and returned)."""
    idx, labels = frame_votes(points, pose, mask, radius)
    if labels.size and labels.max() >= votes.shape[1]:
        raise ValueError(f"mask of frame {pose.frame_id} holds class {labels.max()} "
                         f"beyond the vote table ({votes.shape[1] - 1} classes)")
    np.add.at(votes, (idx, labels), 1)
    return votes


def finalize_weighted_majority(votes: np.ndarray, classes: ClassTable) -> np.ndarray:
    """Per-point argmax of ``count * weight``; ties and empty rows go low."""
    weights = classes.weights()
    if votes.shape[1] != weights.size:
        raise ValueError(f"vote table has {votes.shape[1]} columns, class table {weights.size}")
    scores = votes * weights
    return np.argmax(scores, axis=1).astype(np.uint8)
