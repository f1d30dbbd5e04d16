"""Detection metrics for parallelogram footprints.

Predictions are matched to labels per image (greedy by confidence, exact
polygon IoU strictly above 0.5). On top of the matching we report precision,
recall, mAP@50 (all-points interpolation), AIoU (mean IoU of matched pairs)
and mAOE (mean front-to-rear axis angle error, degrees).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .codec import Detection
from .geometry import Parallelogram, Point2, aabb_array, exact_iou

MATCH_IOU = 0.5


class DegenerateOrientation(ValueError):
    """Front and rear edge midpoints coincide, so the axis has no direction."""


@dataclass(frozen=True)
class GroundTruthLabel:
    footprint: Parallelogram
    class_id: int = 0


class MatchPair(NamedTuple):
    pred_index: int
    gt_index: int
    iou: float
    pred: Parallelogram
    gt: Parallelogram


@dataclass
class MatchSet:
    pairs: list[MatchPair] = field(default_factory=list)
    unmatched_preds: list[int] = field(default_factory=list)
    unmatched_gts: list[int] = field(default_factory=list)
    # per-prediction TP flag in input order, used for AP
    tp: list[bool] = field(default_factory=list, repr=False)

    @property
    def n_tp(self) -> int:
        return len(self.pairs)

    @property
    def n_fp(self) -> int:
        return len(self.unmatched_preds)

    @property
    def n_fn(self) -> int:
        return len(self.unmatched_gts)


class OrientedMidpoints(NamedTuple):
    front_mid: Point2
    rear_mid: Point2


@dataclass
class EvalReport:
    precision: float
    recall: float
    map50: float
    aiou: float | None
    maoe: float | None
    maoe_unfolded: float | None
    tp: int
    fp: int
    fn: int
    images: int
    ap_per_class: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "map50": self.map50,
            "aiou": self.aiou,
            "maoe": self.maoe,
            "maoe_unfolded": self.maoe_unfolded,
            "support": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "images": self.images},
            "ap_per_class": {str(k): v for k, v in sorted(self.ap_per_class.items())},
        }

    def to_text(self) -> str:
        def fmt(v, unit=""):
            return "n/a" if v is None else f"{v:.4f}{unit}"

        lines = [
            f"precision   {fmt(self.precision)}",
            f"recall      {fmt(self.recall)}",
            f"mAP@50      {fmt(self.map50)}",
            f"AIoU        {fmt(self.aiou)}",
            f"mAOE        {fmt(self.maoe, ' deg')}",
            f"mAOE (raw)  {fmt(self.maoe_unfolded, ' deg')}",
            f"TP/FP/FN    {self.tp}/{self.fp}/{self.fn} over {self.images} image(s)",
        ]
        for k, v in sorted(self.ap_per_class.items()):
            lines.append(f"AP@50 class {k}: {v:.4f}")
        return "\n".join(lines) + "\n"


def match_detections(
    preds: Sequence[Detection], gts: Sequence[GroundTruthLabel], iou_threshold: float = MATCH_IOU
) -> MatchSet:
    """Greedy per-image matching.

    Predictions are visited by descending confidence (input order on ties); each
    takes the still-unmatched same-class label with the highest IoU if that IoU
    is strictly above ``iou_threshold``.
    """
    ms = MatchSet(tp=[False] * len(preds))
    taken = [False] * len(gts)
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    gt_boxes = aabb_array([g.footprint for g in gts])
    for i in order:
        p = preds[i]
        best_iou, best_j = 0.0, -1
        if len(gts):
            b = aabb_array([p.footprint])[0]
            near = (
                (gt_boxes[:, 0] < b[2]) & (gt_boxes[:, 2] > b[0])
                & (gt_boxes[:, 1] < b[3]) & (gt_boxes[:, 3] > b[1])
            )
            for j in np.flatnonzero(near):
                if taken[j] or gts[j].class_id != p.class_id:
                    continue
                iou = exact_iou(p.footprint, gts[j].footprint)
                if iou > best_iou:
                    best_iou, best_j = iou, int(j)
        if best_j >= 0 and best_iou > iou_threshold:
            taken[best_j] = True
            ms.tp[i] = True
            ms.pairs.append(MatchPair(i, best_j, best_iou, p.footprint, gts[best_j].footprint))
        else:
            ms.unmatched_preds.append(i)
    ms.unmatched_gts = [j for j, t in enumerate(taken) if not t]
    ms.unmatched_preds.sort()
    return ms


def _pr_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float]:
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return precision, recall


def precision_recall(ms: MatchSet) -> tuple[float, float]:
    """``(P, R)``; P is 1 with no predictions, R is 1 with no labels."""
    return _pr_from_counts(ms.n_tp, ms.n_fp, ms.n_fn)


def _all_points_ap(scores: np.ndarray, tp: np.ndarray, n_gt: int) -> float:
    if n_gt == 0:
        return 0.0
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = tp[order].astype(float)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_gt
    precision = ctp / (ctp + cfp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def average_precision_50(
    preds: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, Sequence[GroundTruthLabel]],
    matches: Mapping[str, MatchSet] | None = None,
) -> tuple[float, dict[int, float]]:
    """mAP@50 over classes that have at least one label, plus per-class AP.

    Predictions are ranked across the whole dataset; TP flags come from the
    per-image greedy matching.
    """
    if matches is None:
        matches = {k: match_detections(preds.get(k, []), gts.get(k, [])) for k in _image_ids(preds, gts)}
    scores, flags, classes = [], [], []
    n_gt: dict[int, int] = {}
    for k in _image_ids(preds, gts):
        for g in gts.get(k, []):
            n_gt[g.class_id] = n_gt.get(g.class_id, 0) + 1
        ms = matches[k]
        for i, d in enumerate(preds.get(k, [])):
            scores.append(d.confidence)
            flags.append(ms.tp[i])
            classes.append(d.class_id)
    scores_a = np.asarray(scores, dtype=float)
    flags_a = np.asarray(flags, dtype=bool)
    classes_a = np.asarray(classes, dtype=int)
    per_class = {}
    for c in sorted(n_gt):
        sel = classes_a == c
        per_class[c] = _all_points_ap(scores_a[sel], flags_a[sel], n_gt[c])
    if not per_class:
        return 0.0, per_class
    return float(np.mean(list(per_class.values()))), per_class


def aiou(ms: MatchSet | Sequence[MatchPair]) -> float | None:
    """Mean IoU over matched pairs; ``None`` when nothing matched."""
    pairs = ms.pairs if isinstance(ms, MatchSet) else ms
    if not pairs:
        return None
    return float(np.mean([p.iou for p in pairs]))


def oriented_midpoints(par: Parallelogram) -> OrientedMidpoints:
    p1, p2, p3, p4 = par.vertices
    return OrientedMidpoints(
        Point2((p1.x + p2.x) * 0.5, (p1.y + p2.y) * 0.5),
        Point2((p3.x + p4.x) * 0.5, (p3.y + p4.y) * 0.5),
    )


def axis_angle(par: Parallelogram) -> float:
    """Slope angle of the front-to-rear axis in degrees, in ``(-90, 90]``."""
    front, rear = oriented_midpoints(par)
    dx, dy = rear.x - front.x, rear.y - front.y
    if dx == 0.0 and dy == 0.0:
        raise DegenerateOrientation("front and rear midpoints coincide")
    theta = math.degrees(math.atan2(dy, dx))
    # a line direction: fold atan2's (-180, 180] onto (-90, 90]
    if theta > 90.0:
        theta -= 180.0
    elif theta <= -90.0:
        theta += 180.0
    return theta


def absolute_orientation_error(
    pred: Parallelogram, gt: Parallelogram, folded: bool = True
) -> float:
    """Angle between the two front-to-rear axes in degrees.

    ``folded=False`` returns the plain difference of slope angles, in [0, 180).
    The folded value is the line-to-line angle in [0, 90].
    """
    d = abs(axis_angle(pred) - axis_angle(gt))
    if not folded:
        return d
    return min(d, 180.0 - d)


def maoe(ms: MatchSet | Sequence[MatchPair], folded: bool = True) -> float | None:
    pairs = ms.pairs if isinstance(ms, MatchSet) else ms
    if not pairs:
        return None
    return float(np.mean([absolute_orientation_error(p.pred, p.gt, folded) for p in pairs]))


def _image_ids(*maps: Mapping) -> list[str]:
    return sorted(set().union(*(m.keys() for m in maps)))


def evaluate(
    preds: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, Sequence[GroundTruthLabel]],
    map_fn=map,
) -> EvalReport:
    """Full report over a dataset given per-image predictions and labels.

    ``map_fn`` lets callers run per-image matching on a worker pool; it must
    preserve order (``Executor.map`` does).
    """
    ids = _image_ids(preds, gts)
    results = list(map_fn(lambda k: match_detections(preds.get(k, []), gts.get(k, [])), ids))
    matches = dict(zip(ids, results))
    tp = sum(m.n_tp for m in results)
    fp = sum(m.n_fp for m in results)
    fn = sum(m.n_fn for m in results)
    precision, recall = _pr_from_counts(tp, fp, fn)
    map50, per_class = average_precision_50(preds, gts, matches)
    pairs = [p for m in results for p in m.pairs]
    return EvalReport(
        precision=precision,
        recall=recall,
        map50=map50,
        aiou=aiou(pairs),
        maoe=maoe(pairs),
        maoe_unfolded=maoe(pairs, folded=False),
        tp=tp,
        fp=fp,
        fn=fn,
        images=len(ids),
        ap_per_class=per_class,
    )
