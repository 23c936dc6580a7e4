"""Equirectangular <-> rectilinear face conversion (18-face cube-map variant).

Conventions used throughout the package:

    camera frame   x right, y down, z forward
    longitude      lon = atan2(x, z), 0 at the image centre column
    latitude       lat = asin(y), -pi/2 (straight up) at row 0
    equirect px    u = (lon + pi) / (2 pi) * W,  v = (lat + pi/2) / pi * H

A frame is split into three rings of ``nb_splits`` views each.  Every view is
a pinhole camera with a 90 degree field of view (focal length = resolution/2),
yawed by ``index / nb_splits * 2 pi - pi`` and pitched by +30 degrees (top),
0 (horizontal) or -30 degrees (bottom).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

RINGS = ("horizontal", "top", "bottom")
_PITCH = {"horizontal": 0.0, "top": math.pi / 6, "bottom": -math.pi / 6}
# absorbs float noise on the frustum edge (|x/z| = 1 exactly at face borders)
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class FaceSpec:
    ring: str
    index: int
    nb_splits: int = 6
    resolution: int = 512

    def __post_init__(self):
        if self.ring not in RINGS:
            raise ValueError(f"unknown ring {self.ring!r}; expected one of {RINGS}")
        if self.nb_splits < 1:
            raise ValueError(f"nb_splits must be >= 1, got {self.nb_splits}")
        if not 0 <= self.index < self.nb_splits:
            raise ValueError(f"face index {self.index} outside [0, {self.nb_splits})")
        if self.resolution <= 0:
            raise ValueError(f"face resolution must be positive, got {self.resolution}")

    @property
    def yaw(self) -> float:
        return self.index / self.nb_splits * 2 * math.pi - math.pi

    @property
    def pitch(self) -> float:
        return _PITCH[self.ring]

    @property
    def focal(self) -> float:
        return self.resolution / 2

    def filename(self, frame_id: str, suffix: str = ".png") -> str:
        return f"{frame_id}_{self.ring}_{self.index}{suffix}"


def face_specs(nb_splits: int = 6, resolution: int = 512) -> list[FaceSpec]:
    """All faces of one frame, interleaved horizontal/top/bottom per index."""
    return [
        FaceSpec(ring, i, nb_splits, resolution)
        for i in range(nb_splits)
        for ring in RINGS
    ]


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_for_face(spec: FaceSpec) -> np.ndarray:
    """Face-to-panorama rotation ``R_yaw @ R_pitch``.

    A face-frame ray ``V`` points along ``R @ V`` in the panorama frame.
    Positive pitch rotates the forward axis towards -y, i.e. upwards.
    """
    return rot_y(spec.yaw) @ rot_x(spec.pitch)


def check_equirect(image: np.ndarray) -> tuple[int, int]:
    """Return ``(H, W)`` of an equirect raster, rejecting non 2:1 shapes."""
    if image.ndim not in (2, 3):
        raise ValueError(f"equirect raster must be 2-D or 3-D, got shape {image.shape}")
    h, w = image.shape[:2]
    if w <= 0 or w != 2 * h:
        raise ValueError(f"equirect raster must have W = 2H > 0, got {w}x{h}")
    return h, w


def directions_to_equirect(dirs: np.ndarray, width: int, height: int):
    """Map (..., 3) ray directions to continuous equirect coordinates."""
    d = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    lon = np.arctan2(d[..., 0], d[..., 2])
    lat = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    u = (lon + math.pi) / (2 * math.pi) * width
    v = (lat + math.pi / 2) / math.pi * height
    return u, v


def equirect_to_directions(u, v, width: int, height: int) -> np.ndarray:
    """Unit ray directions for (continuous) equirect coordinates."""
    lon = np.asarray(u, dtype=float) / width * 2 * math.pi - math.pi
    lat = np.asarray(v, dtype=float) / height * math.pi - math.pi / 2
    cos_lat = np.cos(lat)
    return np.stack([cos_lat * np.sin(lon), np.sin(lat), cos_lat * np.cos(lon)], axis=-1)


def face_sample_map(spec: FaceSpec, width: int, height: int):
    """Equirect sample coordinates ``(map_x, map_y)`` for every face pixel."""
    res, f = spec.resolution, spec.focal
    coords = (np.arange(res, dtype=float) - res / 2) / f
    yn, xn = np.meshgrid(coords, coords, indexing="ij")
    rays = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
    rotated = rays @ rotation_for_face(spec).T
    return directions_to_equirect(rotated, width, height)


def _round(x):
    return np.floor(x + 0.5).astype(np.int64)


def equirect_to_face(src: np.ndarray, spec: FaceSpec, sampling: str = "bilinear") -> np.ndarray:
    """Render one rectilinear face from an equirect raster.

    Columns wrap around modulo W, rows clamp to [0, H-1].  Label rasters
    must use ``sampling="nearest"``.
    """
    h, w = check_equirect(src)
    map_x, map_y = face_sample_map(spec, w, h)
    if sampling == "nearest":
        xi = _round(map_x) % w
        yi = np.clip(_round(map_y), 0, h - 1)
        return src[yi, xi]
    if sampling != "bilinear":
        raise ValueError(f"unknown sampling {sampling!r}")

    x0 = np.floor(map_x)
    y0 = np.floor(map_y)
    fx = map_x - x0
    fy = map_y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = (x0 + 1) % w
    x0 = x0 % w
    y1 = np.clip(y0 + 1, 0, h - 1)
    y0 = np.clip(y0, 0, h - 1)
    img = src.astype(float)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    if np.issubdtype(src.dtype, np.integer):
        info = np.iinfo(src.dtype)
        out = np.clip(np.floor(out + 0.5), info.min, info.max)
    return out.astype(src.dtype)


def face_to_equirect_lookup(spec: FaceSpec, u: float, v: float, width: int, height: int):
    """Continuous face pixel ``(x, y)`` seen at equirect pixel ``(u, v)``.

    Returns ``None`` when the ray points away from the face or leaves its
    frustum.
    """
    if not (0 <= u < width and 0 <= v < height):
        raise ValueError(f"equirect pixel ({u}, {v}) outside {width}x{height}")
    d = equirect_to_directions(u, v, width, height)
    r = rotation_for_face(spec).T @ d
    if r[2] <= 0:
        return None
    tx, ty = r[0] / r[2], r[1] / r[2]
    if abs(tx) > 1 + _EDGE_TOL or abs(ty) > 1 + _EDGE_TOL:
        return None
    f = spec.focal
    return tx * f + spec.resolution / 2, ty * f + spec.resolution / 2


def face_lookup_map(spec: FaceSpec, width: int, height: int):
    """Vectorised lookup over the whole equirect grid.

    Returns ``(hit, fx, fy)``: a (H, W) boolean coverage mask and integer
    face pixel indices (valid where ``hit``).
    """
    vv, uu = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    d = equirect_to_directions(uu, vv, width, height)
    r = d @ rotation_for_face(spec)  # == (R^T d) for each row
    z = r[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(z > 0, r[..., 0] / z, np.inf)
        ty = np.where(z > 0, r[..., 1] / z, np.inf)
    hit = (z > 0) & (np.abs(tx) <= 1 + _EDGE_TOL) & (np.abs(ty) <= 1 + _EDGE_TOL)
    res, f = spec.resolution, spec.focal
    fx = np.clip(_round(np.where(hit, tx, 0) * f + res / 2), 0, res - 1)
    fy = np.clip(_round(np.where(hit, ty, 0) * f + res / 2), 0, res - 1)
    return hit, fx, fy


@functools.lru_cache(maxsize=128)
def face_lookup_table(spec: FaceSpec, width: int, height: int):
    """Compact, cached form of :func:`face_lookup_map`.

    Returns flat equirect indices of covered pixels and the matching flat
    face pixel indices.  Arrays are read-only.
    """
    hit, fx, fy = face_lookup_map(spec, width, height)
    eq_idx = np.flatnonzero(hit)
    face_idx = (fy.ravel()[eq_idx] * spec.resolution + fx.ravel()[eq_idx])
    eq_idx.flags.writeable = False
    face_idx.flags.writeable = False
    return eq_idx, face_idx
