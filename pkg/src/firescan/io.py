"""Readers and writers for every on-disk format the toolkit touches.

Text manifests are UTF-8, line oriented, and start with a one-line header
``# firescan-<kind> v1: <columns>``.  Further lines starting with ``#`` and
blank lines are ignored on read.
"""
from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .fusion import AssetClass, ClassTable
from .geometry import FaceSpec
from .instances import AssetInstance
from .projection import CameraPose
from .registration import SimilarityTransform, SurfaceMesh

SCHEMA_VERSION = "v1"

# id 0 (background) is grey; asset ids cycle through a qualitative palette
CLASS_COLORS = np.array([
    (160, 160, 160), (228, 26, 28), (55, 126, 184), (77, 175, 74), (152, 78, 163),
    (255, 127, 0), (255, 255, 51), (166, 86, 40), (247, 129, 191), (27, 158, 119),
    (217, 95, 2), (117, 112, 179), (231, 41, 138), (102, 166, 30), (230, 171, 2),
    (0, 0, 0),
], dtype=np.uint8)


class FormatError(ValueError):
    """A file exists but does not follow its documented format."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = Path(path)


def class_colors(labels: np.ndarray) -> np.ndarray:
    return CLASS_COLORS[np.asarray(labels) % len(CLASS_COLORS)]


# ---------------------------------------------------------------- atomic files

def atomic_write(path, data: bytes | str) -> Path:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x) -> str:
    return repr(float(x))


def _header(kind: str, columns: str) -> str:
    return f"# firescan-{kind} {SCHEMA_VERSION}: {columns}\n"


def _data_lines(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(path, f"cannot read ({exc.strerror})") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield lineno, line.rstrip("\n")


# ---------------------------------------------------------------------- images

def read_image(path) -> np.ndarray:
    """Colour image as (H, W, 3) uint8."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_image(path, pixels: np.ndarray) -> Path:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels)).save(buf, format="PNG")
    return atomic_write(path, buf.getvalue())


def read_mask(path) -> np.ndarray:
    """Single-channel 8-bit class-id mask as (H, W) uint8."""
    path = Path(path)
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "1", "I", "I;16"):
            raise FormatError(path, f"mask must be single-channel, got mode {im.mode}")
        arr = np.asarray(im)
    if arr.dtype != np.uint8:
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        elif arr.size and (arr.min() < 0 or arr.max() > 255):
            raise FormatError(path, "mask values outside 0..255")
        arr = arr.astype(np.uint8)
    return arr


def write_mask(path, labels: np.ndarray) -> Path:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("class ids must fit in 8 bits")
    return write_image(path, labels.astype(np.uint8))


# ------------------------------------------------------------------------- PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_PLY_NAMES = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
              "i4": "int", "u4": "uint", "f4": "float", "f8": "double"}


def _parse_ply_header(path, fh):
    if fh.readline().strip() != b"ply":
        raise FormatError(path, "missing 'ply' magic")
    fmt = None
    elements = []  # (name, count, [(prop, dtype, list_count_dtype|None)])
    while True:
        raw = fh.readline()
        if not raw:
            raise FormatError(path, "truncated header")
        words = raw.decode("ascii", "replace").split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "end_header":
            break
        if words[0] == "format":
            fmt = words[1]
        elif words[0] == "element":
            elements.append((words[1], int(words[2]), []))
        elif words[0] == "property":
            if not elements:
                raise FormatError(path, "property before element")
            try:
                if words[1] == "list":
                    elements[-1][2].append((words[4], _PLY_TYPES[words[3]], _PLY_TYPES[words[2]]))
                else:
                    elements[-1][2].append((words[2], _PLY_TYPES[words[1]], None))
            except (KeyError, IndexError) as exc:
                raise FormatError(path, f"bad property line {raw!r}") from exc
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise FormatError(path, f"unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_binary_element(path, fh, endian, count, props):
    lists = [p for p in props if p[2] is not None]
    if not lists:
        dtype = np.dtype([(name, endian + t) for name, t, _ in props])
        buf = fh.read(dtype.itemsize * count)
        if len(buf) != dtype.itemsize * count:
            raise FormatError(path, "truncated binary body")
        return np.frombuffer(buf, dtype=dtype, count=count)
    # triangle lists: assume 3 entries, verify the counts afterwards
    fields = []
    for name, t, ct in props:
        if ct is None:
            fields.append((name, endian + t))
        else:
            fields.append((name + "__n", endian + ct))
            fields.append((name, endian + t, (3,)))
    dtype = np.dtype(fields)
    buf = fh.read(dtype.itemsize * count)
    if len(buf) != dtype.itemsize * count:
        raise FormatError(path, "truncated binary face list (non-triangular faces?)")
    arr = np.frombuffer(buf, dtype=dtype, count=count)
    for name, _, ct in lists:
        if count and np.any(arr[name + "__n"] != 3):
            raise FormatError(path, "faces must be pre-triangulated")
    return arr


def _read_ascii_element(path, lines, count, props):
    rows = [next(lines, None) for _ in range(count)]
    if count and rows[-1] is None:
        raise FormatError(path, "truncated ascii body")
    out = {}
    if all(p[2] is None for p in props):
        table = np.array([r.split()[:len(props)] for r in rows], dtype=float).reshape(count, len(props))
        for i, (name, t, _) in enumerate(props):
            out[name] = table[:, i].astype(t)
        return out
    cols = {name: [] for name, _, _ in props}
    for r in rows:
        toks = r.split()
        pos = 0
        for name, t, ct in props:
            if ct is None:
                cols[name].append(float(toks[pos]))
                pos += 1
            else:
                n = int(toks[pos])
                if n != 3:
                    raise FormatError(path, "faces must be pre-triangulated")
                cols[name].append([int(v) for v in toks[pos + 1:pos + 1 + n]])
                pos += 1 + n
    for name, t, ct in props:
        out[name] = np.array(cols[name], dtype=t)
    return out


def read_ply(path) -> dict[str, dict[str, np.ndarray]]:
    """All elements of a PLY file as ``{element: {property: array}}``."""
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(path, fh)
        result = {}
        if fmt == "ascii":
            lines = (ln for ln in fh.read().decode("ascii").splitlines() if ln.strip())
            for name, count, props in elements:
                result[name] = _read_ascii_element(path, lines, count, props)
        else:
            endian = "<" if fmt == "binary_little_endian" else ">"
            for name, count, props in elements:
                arr = _read_binary_element(path, fh, endian, count, props)
                result[name] = {p[0]: np.array(arr[p[0]]) for p in props}
    return result


def write_ply(path, vertex: dict[str, np.ndarray], faces: np.ndarray | None = None,
              binary: bool = True) -> Path:
    """Write vertex properties (and optional triangles) to a PLY file."""
    names = list(vertex)
    n = len(vertex[names[0]])
    arrays = [np.asarray(vertex[k]) for k in names]
    dtype = np.dtype([(k, "<" + a.dtype.str[1:]) for k, a in zip(names, arrays)])
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {n}"]
    header += [f"property {_PLY_NAMES[dtype[k].str[1:]]} {k}" for k in names]
    if faces is not None:
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    out = io.BytesIO()
    out.write(("\n".join(header) + "\n").encode("ascii"))
    if binary:
        rec = np.empty(n, dtype=dtype)
        for k, a in zip(names, arrays):
            rec[k] = a
        out.write(rec.tobytes())
        if faces is not None:
            frec = np.empty(len(faces), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            frec["n"] = 3
            frec["idx"] = faces
            out.write(frec.tobytes())
    else:
        for i in range(n):
            out.write((" ".join(
                _fmt(a[i]) if a.dtype.kind == "f" else str(int(a[i])) for a in arrays
            ) + "\n").encode("ascii"))
        if faces is not None:
            for f in faces:
                out.write(f"3 {int(f[0])} {int(f[1])} {int(f[2])}\n".encode("ascii"))
    return atomic_write(path, out.getvalue())


def read_cloud(path):
    """``(points, extras)`` where extras holds any non-xyz vertex properties."""
    data = read_ply(path)
    if "vertex" not in data:
        raise FormatError(path, "no vertex element")
    v = data["vertex"]
    try:
        points = np.stack([v["x"], v["y"], v["z"]], axis=1).astype(float)
    except KeyError as exc:
        raise FormatError(path, "vertex element lacks x/y/z") from exc
    if not np.all(np.isfinite(points)):
        raise FormatError(path, "non-finite coordinates")
    extras = {k: a for k, a in v.items() if k not in ("x", "y", "z")}
    return points, extras


def write_cloud(path, points: np.ndarray, labels: np.ndarray | None = None,
                colors: np.ndarray | None = None) -> Path:
    vertex = {"x": points[:, 0].astype("f8"), "y": points[:, 1].astype("f8"), "z": points[:, 2].astype("f8")}
    if labels is not None and colors is None:
        colors = class_colors(labels)
    if colors is not None:
        for i, ch in enumerate(("red", "green", "blue")):
            vertex[ch] = np.asarray(colors)[:, i].astype("u1")
    if labels is not None:
        vertex["class_id"] = np.asarray(labels).astype("u1")
    return write_ply(path, vertex)


def read_mesh(path) -> SurfaceMesh:
    """Triangle mesh from PLY (binary or ascii) or Wavefront OBJ.

    OBJ groups/objects (``g``/``o``) become per-triangle component tags.
    """
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return _read_obj(path)
    data = read_ply(path)
    if "face" not in data:
        raise FormatError(path, "PLY mesh has no face element")
    v = data["vertex"]
    face = data["face"]
    key = "vertex_indices" if "vertex_indices" in face else "vertex_index"
    if key not in face:
        raise FormatError(path, "face element lacks vertex_indices")
    verts = np.stack([v["x"], v["y"], v["z"]], axis=1)
    try:
        return SurfaceMesh(verts, face[key])
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc


def _read_obj(path: Path) -> SurfaceMesh:
    verts, tris, tags = [], [], []
    tag = ""
    for lineno, line in _data_lines(path):
        toks = line.split()
        if toks[0] == "v":
            verts.append([float(t) for t in toks[1:4]])
        elif toks[0] in ("g", "o"):
            tag = " ".join(toks[1:])
        elif toks[0] == "f":
            idx = [int(t.split("/")[0]) for t in toks[1:]]
            if len(idx) != 3:
                raise FormatError(path, f"line {lineno}: faces must be pre-triangulated")
            tris.append([i - 1 if i > 0 else len(verts) + i for i in idx])
            tags.append(tag)
    try:
        return SurfaceMesh(np.array(verts), np.array(tris), tags)
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc


# ------------------------------------------------------------------- manifests

def write_class_table(path, table: ClassTable) -> Path:
    lines = [_header("classes", "class_id name vote_weight cluster_eps cluster_min_pts")]
    for c in table.classes:
        lines.append(f"{c.class_id}\t{c.name}\t{_fmt(c.vote_weight)}\t{_fmt(c.cluster_eps)}\t{c.cluster_min_pts}\n")
    return atomic_write(path, "".join(lines))


def read_class_table(path) -> ClassTable:
    classes = []
    for lineno, line in _data_lines(path):
        f = line.split("\t")
        try:
            classes.append(AssetClass(int(f[0]), f[1].strip(), float(f[2]), float(f[3]), int(f[4])))
        except (IndexError, ValueError) as exc:
            raise FormatError(path, f"line {lineno}: expected 5 tab-separated fields") from exc
    try:
        return ClassTable(tuple(classes))
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc


FACE_COLUMNS = "frame_id ring index nb_splits resolution width height file"


def write_face_manifest(path, entries) -> Path:
    """``entries``: iterable of (frame_id, FaceSpec, W, H, filename)."""
    lines = [_header("faces", FACE_COLUMNS)]
    for frame_id, spec, w, h, name in entries:
        lines.append(f"{frame_id}\t{spec.ring}\t{spec.index}\t{spec.nb_splits}\t"
                     f"{spec.resolution}\t{w}\t{h}\t{name}\n")
    return atomic_write(path, "".join(lines))


def read_face_manifest(path):
    out = []
    for lineno, line in _data_lines(path):
        f = line.split("\t")
        try:
            spec = FaceSpec(f[1], int(f[2]), int(f[3]), int(f[4]))
            out.append((f[0], spec, int(f[5]), int(f[6]), f[7]))
        except (IndexError, ValueError) as exc:
            raise FormatError(path, f"line {lineno}: {exc}") from exc
    return out


def write_poses(path, poses) -> Path:
    lines = [_header("poses", "frame_id image cx cy cz r00 r01 r02 r10 r11 r12 r20 r21 r22 (camera-to-world)")]
    for p in poses:
        nums = " ".join(_fmt(x) for x in list(p.position) + list(p.orientation.ravel()))
        lines.append(f"{p.frame_id} {p.image or '-'} {nums}\n")
    return atomic_write(path, "".join(lines))


def read_poses(path) -> list[CameraPose]:
    poses = []
    for lineno, line in _data_lines(path):
        f = line.split()
        if len(f) != 14:
            raise FormatError(path, f"line {lineno}: expected 14 fields, got {len(f)}")
        try:
            vals = [float(x) for x in f[2:]]
            poses.append(CameraPose(f[0], vals[:3], np.array(vals[3:]).reshape(3, 3),
                                    "" if f[1] == "-" else f[1]))
        except ValueError as exc:
            raise FormatError(path, f"line {lineno}: {exc}") from exc
    return poses


def write_pairs(path, source: np.ndarray, target: np.ndarray) -> Path:
    lines = [_header("pairs", "sx sy sz tx ty tz")]
    for s, t in zip(source, target):
        lines.append(" ".join(_fmt(x) for x in list(s) + list(t)) + "\n")
    return atomic_write(path, "".join(lines))


def read_pairs(path):
    rows = []
    for lineno, line in _data_lines(path):
        f = line.split()
        if len(f) != 6:
            raise FormatError(path, f"line {lineno}: expected 6 reals, got {len(f)}")
        try:
            rows.append([float(x) for x in f])
        except ValueError as exc:
            raise FormatError(path, f"line {lineno}: {exc}") from exc
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    return arr[:, :3], arr[:, 3:]


def write_transform(path, t: SimilarityTransform) -> Path:
    text = (_header("transform", "p_model = scale * R @ p_cloud + t")
            + f"scale {_fmt(t.scale)}\n"
            + "rotation " + " ".join(_fmt(x) for x in t.rotation.ravel()) + "\n"
            + "translation " + " ".join(_fmt(x) for x in t.translation) + "\n"
            + f"rms {_fmt(t.rms)}\n")
    return atomic_write(path, text)


def read_transform(path) -> SimilarityTransform:
    fields = {}
    for _, line in _data_lines(path):
        key, *vals = line.split()
        fields[key] = [float(v) for v in vals]
    try:
        return SimilarityTransform(fields["scale"][0], np.array(fields["rotation"]).reshape(3, 3),
                                   fields["translation"], fields.get("rms", [0.0])[0])
    except (KeyError, ValueError) as exc:
        raise FormatError(path, f"bad transform record ({exc})") from exc


INVENTORY_COLUMNS = "class_id class_name x y z support xmin ymin zmin xmax ymax zmax"


def write_inventory(path, instances, table: ClassTable | None = None, kind: str = "inventory") -> Path:
    lines = [_header(kind, INVENTORY_COLUMNS)]
    for inst in instances:
        name = table.name(inst.class_id) if table is not None else str(inst.class_id)
        vals = [_fmt(x) for x in inst.centroid] + [str(int(inst.support))]
        vals += [_fmt(x) for x in list(inst.bbox_min) + list(inst.bbox_max)]
        lines.append(f"{inst.class_id}\t{name}\t" + "\t".join(vals) + "\n")
    return atomic_write(path, "".join(lines))


def read_inventory(path) -> list[AssetInstance]:
    """Inventory or ground-truth manifest; columns after z are optional."""
    out = []
    for lineno, line in _data_lines(path):
        f = line.split("\t")
        try:
            cid = int(f[0])
            centroid = [float(x) for x in f[2:5]]
            support = int(f[5]) if len(f) > 5 and f[5].strip() else 0
            lo = [float(x) for x in f[6:9]] if len(f) >= 12 else None
            hi = [float(x) for x in f[9:12]] if len(f) >= 12 else None
        except (IndexError, ValueError) as exc:
            raise FormatError(path, f"line {lineno}: {exc}") from exc
        if len(centroid) != 3 or not np.all(np.isfinite(centroid)):
            raise FormatError(path, f"line {lineno}: location must be 3 finite reals")
        out.append(AssetInstance(cid, centroid, support, lo, hi))
    return out
