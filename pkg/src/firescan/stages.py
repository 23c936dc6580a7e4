"""Pipeline stages.  Each reads its inputs from disk and writes its outputs
atomically, so any stage can be re-run in isolation.

Output layout under ``output_dir``::

    faces/<frame>_<ring>_<index>.png   faces/manifest.tsv
    face_masks/...                     (segmenter output unless masks_dir is set)
    equirect_masks/<frame>.png
    labeled.ply  [labeled_registered.ply, transform.txt]  bim_cloud.ply
    inventory.tsv
    report.txt  report.tsv  report_metrics.png  report_locations.png
"""
from __future__ import annotations

import logging
import subprocess
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as fio
from .config import ConfigError, PipelineConfig
from .evaluation import EvalReport, evaluate
from .fusion import ClassTable, merge_faces_cpv, suppress_regions
from .geometry import equirect_to_face, face_specs
from .instances import extract_instances
from .projection import finalize_weighted_majority, frame_votes, new_vote_table
from .registration import apply_transform, estimate_similarity, sample_surface

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class StageError(Exception):
    exit_code = 1


class InputError(StageError):
    exit_code = 1


class ValidationError(StageError):
    exit_code = 2

    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)


def _out(cfg: PipelineConfig, *parts) -> Path:
    return cfg.path("output_dir").joinpath(*parts)


def faces_manifest_path(cfg):
    return _out(cfg, "faces", "manifest.tsv")


def class_table(cfg: PipelineConfig) -> ClassTable:
    if cfg.class_table is None:
        return ClassTable.default()
    try:
        return fio.read_class_table(cfg.require("class_table"))
    except fio.FormatError as exc:
        raise InputError(str(exc)) from exc


def _map(cfg, fn, items):
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _need(cfg, name) -> Path:
    try:
        return cfg.require(name)
    except ConfigError as exc:
        raise InputError(str(exc)) from exc


# --------------------------------------------------------------------- convert

def cmd_convert(cfg: PipelineConfig) -> Path:
    """Split every equirect frame into its rectilinear faces."""
    frames_dir = _need(cfg, "frames_dir")
    frames = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    faces_dir = _out(cfg, "faces")
    specs = face_specs(cfg.nb_splits, cfg.face_resolution)

    def work(path):
        try:
            img = fio.read_image(path)
        except Exception as exc:  # noqa: BLE001 - any decoder failure skips the frame
            log.warning("skipping %s: unreadable (%s)", path.name, exc)
            return None
        h, w = img.shape[:2]
        if w != 2 * h:
            log.warning("skipping %s: %dx%d is not a 2:1 equirect frame", path.name, w, h)
            return None
        rows = []
        for spec in specs:
            name = spec.filename(path.stem)
            fio.write_image(faces_dir / name, equirect_to_face(img, spec, "bilinear"))
            rows.append((path.stem, spec, w, h, name))
        return rows

    results = _map(cfg, work, frames)
    entries = [row for rows in results if rows for row in rows]
    manifest = fio.write_face_manifest(faces_manifest_path(cfg), entries)
    if not entries:
        raise InputError(f"no usable equirect frames in {frames_dir}")
    log.info("convert: %d frames -> %d faces", len(entries) // len(specs), len(entries))
    return manifest


# --------------------------------------------------------------------- segment

def validate_face_masks(manifest, masks_dir: Path, num_classes: int) -> list[str]:
    """Problems with segmenter output, one message per offending face."""
    problems = []
    for _, spec, _, _, name in manifest:
        path = masks_dir / name
        if not path.exists():
            problems.append(f"{path}: missing mask")
            continue
        try:
            mask = fio.read_mask(path)
        except Exception as exc:  # noqa: BLE001
            problems.append(f"{path}: unreadable mask ({exc})")
            continue
        if mask.shape != (spec.resolution, spec.resolution):
            problems.append(f"{path}: shape {mask.shape[1]}x{mask.shape[0]}, "
                            f"expected {spec.resolution}x{spec.resolution}")
        elif mask.size and int(mask.max()) > num_classes:
            problems.append(f"{path}: class id {int(mask.max())} exceeds {num_classes} classes")
    return problems


def read_manifest(cfg):
    path = faces_manifest_path(cfg)
    if not path.exists():
        raise InputError(f"face manifest {path} not found; run 'convert' first")
    try:
        return fio.read_face_manifest(path)
    except fio.FormatError as exc:
        raise InputError(str(exc)) from exc


def cmd_segment(cfg: PipelineConfig) -> Path:
    """Run the external segmenter on the face manifest and validate its masks."""
    manifest = read_manifest(cfg)
    if not cfg.segmenter:
        raise InputError("config parameter 'segmenter' (command template) is required")
    masks_dir = cfg.path("masks_dir")
    masks_dir.mkdir(parents=True, exist_ok=True)
    subs = {"manifest": str(faces_manifest_path(cfg)), "output_dir": str(masks_dir),
            "faces_dir": str(_out(cfg, "faces"))}
    cmd = [arg.format(**subs) for arg in cfg.segmenter]
    log.info("segment: %s", " ".join(cmd))
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True)
    except OSError as exc:
        raise InputError(f"cannot start segmenter {cmd[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise ValidationError(f"segmenter exited with status {proc.returncode}: {proc.stderr.strip()}")
    problems = validate_face_masks(manifest, masks_dir, class_table(cfg).num_classes)
    if problems:
        raise ValidationError(f"{len(problems)} face mask(s) failed validation", problems)
    return masks_dir


# ------------------------------------------------------------------------ fuse

def cmd_fuse(cfg: PipelineConfig) -> Path:
    """Rectify face masks with suppression rasters and CPV-merge per frame."""
    manifest = read_manifest(cfg)
    masks_dir = _need(cfg, "masks_dir")
    supp_dir = cfg.path("suppression_dir")
    if supp_dir is not None and not supp_dir.is_dir():
        raise InputError(f"config parameter 'suppression_dir': {supp_dir} is not a directory")
    num_classes = class_table(cfg).num_classes
    frames = OrderedDict()
    for frame_id, spec, w, h, name in manifest:
        frames.setdefault((frame_id, w, h), []).append((spec, name))
    out_dir = _out(cfg, "equirect_masks")

    def work(item):
        (frame_id, w, h), faces = item
        loaded = []
        for spec, name in faces:
            path = masks_dir / name
            if not path.exists():
                log.warning("frame %s: mask %s absent, face casts no votes", frame_id, name)
                continue
            labels = fio.read_mask(path)
            if supp_dir is not None and (supp_dir / name).exists():
                labels = suppress_regions(labels, fio.read_mask(supp_dir / name))
            loaded.append((spec, labels))
        try:
            merged = merge_faces_cpv(loaded, num_classes, w, h)
        except ValueError as exc:
            raise ValidationError(f"frame {frame_id}: {exc}") from exc
        return fio.write_mask(out_dir / f"{frame_id}.png", merged)

    _map(cfg, work, list(frames.items()))
    log.info("fuse: %d equirect masks", len(frames))
    return out_dir


# --------------------------------------------------------------------- project

def cmd_project(cfg: PipelineConfig) -> Path:
    """Label the point cloud by radius-limited projection of the merged masks."""
    table = class_table(cfg)
    try:
        points, _ = fio.read_cloud(_need(cfg, "cloud"))
        poses = fio.read_poses(_need(cfg, "poses"))
    except (fio.FormatError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    if len(points) == 0:
        raise InputError(f"point cloud {cfg.path('cloud')} is empty")
    mask_dir = _out(cfg, "equirect_masks")
    todo = []
    for pose in poses:
        path = mask_dir / f"{pose.frame_id}.png"
        if path.exists():
            todo.append((pose, path))
        else:
            log.warning("pose %s has no equirect mask; skipped", pose.frame_id)
    if not todo:
        raise InputError(f"no equirect masks in {mask_dir} match the poses file")

    def work(item):
        pose, path = item
        mask = fio.read_mask(path)
        h, w = mask.shape
        if w != 2 * h:
            raise ValidationError(f"{path}: {w}x{h} is not a 2:1 equirect mask")
        if mask.size and int(mask.max()) > table.num_classes:
            raise ValidationError(f"{path}: class id {int(mask.max())} exceeds class table")
        return frame_votes(points, pose, mask, cfg.radius)

    votes = new_vote_table(len(points), table.num_classes)
    # integer addition: result is independent of frame order and worker count
    for idx, labels in _map(cfg, work, todo):
        np.add.at(votes, (idx, labels), 1)
    labels = finalize_weighted_majority(votes, table)
    out = fio.write_cloud(_out(cfg, "labeled.ply"), points, labels)
    log.info("project: %d frames, %d of %d points labelled as assets",
             len(todo), int(np.count_nonzero(labels)), len(points))
    return out


# -------------------------------------------------------------- sample/register

def cmd_sample(cfg: PipelineConfig) -> Path:
    """Synthetic model cloud from the surface mesh (registration target)."""
    try:
        mesh = fio.read_mesh(_need(cfg, "mesh"))
        points = sample_surface(mesh, cfg.sample_points, cfg.seed)
    except (fio.FormatError, ValueError) as exc:
        raise InputError(f"mesh {cfg.path('mesh')}: {exc}") from exc
    return fio.write_cloud(_out(cfg, "bim_cloud.ply"), points)


def cmd_register(cfg: PipelineConfig) -> Path:
    """Estimate the cloud-to-model similarity and move the labelled cloud."""
    try:
        src, dst = fio.read_pairs(_need(cfg, "pairs"))
        transform = estimate_similarity(src, dst)
    except (fio.FormatError, ValueError) as exc:
        raise InputError(f"pairs {cfg.path('pairs')}: {exc}") from exc
    fio.write_transform(_out(cfg, "transform.txt"), transform)
    labeled = _out(cfg, "labeled.ply")
    if not labeled.exists():
        raise InputError(f"{labeled} not found; run 'project' first")
    points, extras = fio.read_cloud(labeled)
    fio.write_cloud(_out(cfg, "labeled_registered.ply"), apply_transform(points, transform),
                    extras.get("class_id"))
    log.info("register: scale %.6f, rms %.4f m over %d pairs", transform.scale, transform.rms, len(src))
    return _out(cfg, "transform.txt")


# --------------------------------------------------------------------- cluster

def cmd_cluster(cfg: PipelineConfig) -> Path:
    """DBSCAN per class over the labelled (registered when pairs are set) cloud."""
    table = class_table(cfg)
    name = "labeled_registered.ply" if cfg.pairs else "labeled.ply"
    src = _out(cfg, name)
    if not src.exists():
        raise InputError(f"{src} not found; run '{'register' if cfg.pairs else 'project'}' first")
    points, extras = fio.read_cloud(src)
    if "class_id" not in extras:
        raise InputError(f"{src} has no class_id property")
    instances = extract_instances(points, extras["class_id"], table)
    log.info("cluster: %d instances", len(instances))
    return fio.write_inventory(_out(cfg, "inventory.tsv"), instances, table)


# -------------------------------------------------------------------- evaluate

def format_report(report: EvalReport) -> str:
    def pct(x):
        return f"{100 * x:5.0f}%"

    lines = [f"{'asset':<26}{'GT':>4}{'TP':>4}{'FP':>4}{'FN':>4}{'P':>7}{'R':>7}{'F1':>7}{'d (m)':>9}"]
    for r in report.rows:
        d = "-" if r.distance is None else f"{r.distance:.3f}"
        lines.append(f"{r.name:<26}{r.gt:>4}{r.tp:>4}{r.fp:>4}{r.fn:>4}"
                     f"{pct(r.precision):>7}{pct(r.recall):>7}{pct(r.f1):>7}{d:>9}")
    d = "-" if report.distance is None else f"{report.distance:.3f}"
    lines.append(f"{'average':<26}{'-':>4}{'-':>4}{'-':>4}{'-':>4}"
                 f"{pct(report.precision):>7}{pct(report.recall):>7}{pct(report.f1):>7}{d:>9}")
    return "\n".join(lines) + "\n"


def report_records(report: EvalReport) -> str:
    lines = ["# firescan-report v1: class_id class_name gt tp fp fn precision recall f1 distance\n"]
    for r in report.rows:
        d = "" if r.distance is None else repr(r.distance)
        lines.append(f"{r.class_id}\t{r.name}\t{r.gt}\t{r.tp}\t{r.fp}\t{r.fn}\t"
                     f"{r.precision!r}\t{r.recall!r}\t{r.f1!r}\t{d}\n")
    d = "" if report.distance is None else repr(report.distance)
    lines.append(f"average\taverage\t\t\t\t\t{report.precision!r}\t{report.recall!r}\t{report.f1!r}\t{d}\n")
    return "".join(lines)


def cmd_evaluate(cfg: PipelineConfig) -> EvalReport:
    """Match the inventory to ground truth; write table, records and figures."""
    from .plotting import plot_class_metrics, plot_locations

    table = class_table(cfg)
    inv_path = _out(cfg, "inventory.tsv")
    if not inv_path.exists():
        raise InputError(f"{inv_path} not found; run 'cluster' first")
    try:
        pred = fio.read_inventory(inv_path)
        truth = fio.read_inventory(_need(cfg, "ground_truth"))
    except fio.FormatError as exc:
        raise InputError(str(exc)) from exc
    names = {c.class_id: c.name for c in table.classes}
    report, matching = evaluate(
        [p.class_id for p in pred], np.array([p.centroid for p in pred]).reshape(-1, 3),
        [g.class_id for g in truth], np.array([g.centroid for g in truth]).reshape(-1, 3),
        cfg.max_dist, names,
    )
    fio.atomic_write(_out(cfg, "report.txt"), format_report(report))
    fio.atomic_write(_out(cfg, "report.tsv"), report_records(report))
    plot_class_metrics(report, _out(cfg, "report_metrics.png"))
    plot_locations(pred, truth, matching, _out(cfg, "report_locations.png"))
    log.info("evaluate: P %.2f R %.2f F1 %.2f", report.precision, report.recall, report.f1)
    return report


# -------------------------------------------------------------------- pipeline

def cmd_pipeline(cfg: PipelineConfig) -> None:
    """convert -> segment -> fuse -> project [-> sample] [-> register] -> cluster
    [-> evaluate]; optional stages run when their inputs are configured."""
    cmd_convert(cfg)
    cmd_segment(cfg)
    cmd_fuse(cfg)
    cmd_project(cfg)
    if cfg.mesh:
        cmd_sample(cfg)
    if cfg.pairs:
        cmd_register(cfg)
    cmd_cluster(cfg)
    if cfg.ground_truth:
        cmd_evaluate(cfg)


STAGES = {
    "convert": cmd_convert,
    "segment": cmd_segment,
    "fuse": cmd_fuse,
    "project": cmd_project,
    "cluster": cmd_cluster,
    "sample": cmd_sample,
    "register": cmd_register,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}
