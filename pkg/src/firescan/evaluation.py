"""Instance matching against ground truth and recognition/localization metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_MAX_DIST = 1.5


@dataclass
class Matching:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)  # (pred, truth, distance)
    false_positives: list[int] = field(default_factory=list)
    false_negatives: list[int] = field(default_factory=list)


def match_instances(
    pred_classes: Sequence[int],
    pred_locs: np.ndarray,
    gt_classes: Sequence[int],
    gt_locs: np.ndarray,
    max_dist: float = DEFAULT_MAX_DIST,
) -> Matching:
    """Greedy class-aware matching, globally closest pair first.

    Candidate pairs share a class and lie within ``max_dist``.  Distance ties
    are broken by prediction index, then truth index.
    """
    if not max_dist > 0:
        raise ValueError(f"max_dist must be positive, got {max_dist}")
    pc = np.asarray(pred_classes, dtype=np.int64)
    gc = np.asarray(gt_classes, dtype=np.int64)
    pl = np.asarray(pred_locs, dtype=float).reshape(-1, 3)
    gl = np.asarray(gt_locs, dtype=float).reshape(-1, 3)

    if len(pc) and len(gc):
        dist = np.linalg.norm(pl[:, None, :] - gl[None, :, :], axis=2)
        ok = (pc[:, None] == gc[None, :]) & (dist <= max_dist)
        pi, gi = np.nonzero(ok)
        d = dist[pi, gi]
        order = np.lexsort((gi, pi, d))
    else:
        pi = gi = order = np.zeros(0, dtype=np.int64)
        d = np.zeros(0)

    used_p, used_g = set(), set()
    m = Matching()
    for k in order:
        p, g = int(pi[k]), int(gi[k])
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
        m.pairs.append((p, g, float(d[k])))
    m.pairs.sort()
    m.false_positives = [i for i in range(len(pc)) if i not in used_p]
    m.false_negatives = [i for i in range(len(gc)) if i not in used_g]
    return m


@dataclass
class ClassMetrics:
    class_id: int
    name: str
    gt: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    distance: float | None


@dataclass
class EvalReport:
    rows: list[ClassMetrics]
    precision: float
    recall: float
    f1: float
    distance: float | None


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with zero-denominator conventions (all 0)."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def class_metrics(class_id: int, name: str, tp: int, fp: int, fn: int,
                  distances: Sequence[float] = ()) -> ClassMetrics:
    p, r, f1 = prf(tp, fp, fn)
    d = float(np.mean(distances)) if tp and len(distances) else None
    return ClassMetrics(class_id, name, tp + fn, tp, fp, fn, p, r, f1, d)


def macro_average(rows: list[ClassMetrics]) -> EvalReport:
    """Unweighted mean over classes present in ground truth.

    The distance average only includes classes with at least one TP.
    """
    scored = [r for r in rows if r.gt > 0]
    if not scored:
        return EvalReport(rows, 0.0, 0.0, 0.0, None)
    dists = [r.distance for r in scored if r.distance is not None]
    return EvalReport(
        rows,
        precision=float(np.mean([r.precision for r in scored])),
        recall=float(np.mean([r.recall for r in scored])),
        f1=float(np.mean([r.f1 for r in scored])),
        distance=float(np.mean(dists)) if dists else None,
    )


def compute_metrics(matching: Matching, pred_classes, gt_classes, names=None) -> EvalReport:
    """Per-class TP/FP/FN, P/R/F1 and TP distance error, plus macro average.

    ``names`` maps class id to a display name.  Rows are emitted for every
    class seen in predictions or ground truth, ordered by id.
    """
    pred_classes = [int(c) for c in pred_classes]
    gt_classes = [int(c) for c in gt_classes]
    names = names or {}
    rows = []
    for cid in sorted(set(pred_classes) | set(gt_classes)):
        tps = [d for p, _, d in matching.pairs if pred_classes[p] == cid]
        fp = sum(1 for i in matching.false_positives if pred_classes[i] == cid)
        fn = sum(1 for i in matching.false_negatives if gt_classes[i] == cid)
        rows.append(class_metrics(cid, names.get(cid, str(cid)), len(tps), fp, fn, tps))
    return macro_average(rows)


def evaluate(pred_classes, pred_locs, gt_classes, gt_locs, max_dist=DEFAULT_MAX_DIST, names=None):
    m = match_instances(pred_classes, pred_locs, gt_classes, gt_locs, max_dist)
    return compute_metrics(m, pred_classes, gt_classes, names), m
