"""Decoding raw head outputs and suppressing duplicate footprints.

Raw predictions carry three offset vectors per anchor; adding them to the
anchor gives the triangle, and reflection gives the footprint. The one-to-many
assignment produces many overlapping footprints per object, so NMS is needed.
``approx_nms`` scores overlap with the footprints' axis-aligned boxes;
``exact_nms`` clips the parallelograms. ``nms_benchmark`` times both and
measures how far the two overlap scores drift apart.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assignment import AnchorGrid, encode
from .geometry import (
    EPS_AREA,
    DegenerateTriangle,
    Parallelogram,
    Point2,
    Triangle25,
    aabb_array,
    exact_iou,
    reconstruct_parallelogram,
)

DEFAULT_CONF_THRESHOLD = 0.1
DEFAULT_IOU_THRESHOLD = 0.5


class IndexOutOfGrid(IndexError):
    pass


@dataclass(frozen=True)
class RawPrediction:
    anchor_index: int
    v1: tuple[float, float]
    v2: tuple[float, float]
    v3: tuple[float, float]
    class_scores: tuple[float, ...]

    @property
    def confidence(self) -> float:
        return max(self.class_scores) if self.class_scores else 0.0

    @property
    def class_id(self) -> int:
        return int(np.argmax(self.class_scores))


@dataclass(frozen=True)
class Detection:
    footprint: Parallelogram
    class_id: int = 0
    confidence: float = 1.0


@dataclass
class NmsReport:
    kept_exact: int
    kept_approx: int
    mean_abs_iou_discrepancy: float
    exact_time: float
    approx_time: float
    n_pairs: int = 0
    disagreement_rate: float = 0.0
    pairs: list[tuple[float, float]] = field(default_factory=list, repr=False)

    @property
    def speedup(self) -> float:
        return self.exact_time / self.approx_time

    def to_dict(self) -> dict:
        return {
            "kept_exact": self.kept_exact,
            "kept_approx": self.kept_approx,
            "mean_abs_iou_discrepancy": self.mean_abs_iou_discrepancy,
            "n_pairs": self.n_pairs,
            "disagreement_rate": self.disagreement_rate,
            "exact_time": self.exact_time,
            "approx_time": self.approx_time,
            "speedup": self.speedup,
        }


def decode(raw: RawPrediction, grid: AnchorGrid) -> Triangle25:
    if not 0 <= raw.anchor_index < len(grid):
        raise IndexOutOfGrid(f"anchor {raw.anchor_index} outside grid of {len(grid)}")
    ax, ay = grid.anchor(raw.anchor_index)
    return Triangle25(
        Point2(ax + raw.v1[0], ay + raw.v1[1]),
        Point2(ax + raw.v2[0], ay + raw.v2[1]),
        Point2(ax + raw.v3[0], ay + raw.v3[1]),
    )


def encode_prediction(
    tri: Triangle25, grid: AnchorGrid, anchor_index: int, class_scores: Sequence[float]
) -> RawPrediction:
    v = encode(tri, grid.anchor(anchor_index))
    return RawPrediction(
        int(anchor_index),
        (float(v[0, 0]), float(v[0, 1])),
        (float(v[1, 0]), float(v[1, 1])),
        (float(v[2, 0]), float(v[2, 1])),
        tuple(float(s) for s in class_scores),
    )


def filter_confidence(items: Sequence, threshold: float = DEFAULT_CONF_THRESHOLD) -> list:
    """Keep items whose (max class) confidence is at least ``threshold``."""
    return [d for d in items if d.confidence >= threshold]


def decode_predictions(
    raws: Sequence[RawPrediction],
    grid: AnchorGrid,
    threshold: float = DEFAULT_CONF_THRESHOLD,
    eps_area: float = EPS_AREA,
) -> tuple[list[Detection], int]:
    """Decode, confidence-filter, and drop degenerate triangles.

    Returns the detections and the number of degenerate triangles dropped.
    """
    dets = []
    dropped = 0
    for raw in filter_confidence(raws, threshold):
        try:
            fp = reconstruct_parallelogram(decode(raw, grid), eps_area)
        except DegenerateTriangle:
            dropped += 1
            continue
        dets.append(Detection(fp, raw.class_id, raw.confidence))
    return dets, dropped


def _candidate_pairs(boxes: np.ndarray, cls: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Same-class index pairs ``i < j`` whose boxes overlap, with their box IoU.

    Sort-and-sweep on ``xmin``; only pairs overlapping in x are materialized.
    """
    n = len(boxes)
    xs = np.argsort(boxes[:, 0], kind="stable")
    sorted_xmin = boxes[xs, 0]
    hi = np.searchsorted(sorted_xmin, boxes[xs, 2], side="left")
    counts = np.maximum(hi - np.arange(n) - 1, 0)
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=int)
        return empty, empty, np.zeros(0)
    a_pos = np.repeat(np.arange(n), counts)
    starts = np.cumsum(counts) - counts
    b_pos = a_pos + 1 + (np.arange(total) - np.repeat(starts, counts))
    a, b = xs[a_pos], xs[b_pos]
    ba, bb = boxes[a], boxes[b]
    iw = np.minimum(ba[:, 2], bb[:, 2]) - np.maximum(ba[:, 0], bb[:, 0])
    ih = np.minimum(ba[:, 3], bb[:, 3]) - np.maximum(ba[:, 1], bb[:, 1])
    ok = (iw > 0) & (ih > 0) & (cls[a] == cls[b])
    a, b, ba, bb, iw, ih = a[ok], b[ok], ba[ok], bb[ok], iw[ok], ih[ok]
    inter = iw * ih
    union = (ba[:, 2] - ba[:, 0]) * (ba[:, 3] - ba[:, 1]) + (bb[:, 2] - bb[:, 0]) * (bb[:, 3] - bb[:, 1]) - inter
    iou = np.where(union >= EPS_AREA, inter / np.maximum(union, EPS_AREA), 0.0)
    i, j = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((j, i))
    return i[order], j[order], iou[order]


def _greedy_nms(
    dets: Sequence[Detection],
    iou_threshold: float,
    exact: bool,
    record: Callable[[float, float], None] | None = None,
) -> list[Detection]:
    if not dets:
        return []
    conf = np.array([d.confidence for d in dets])
    order = np.argsort(-conf, kind="stable")
    ordered = [dets[k] for k in order]
    cls = np.array([d.class_id for d in ordered])
    boxes = aabb_array([d.footprint for d in ordered])
    pi, pj, piou = _candidate_pairs(boxes, cls)
    bounds = np.searchsorted(pi, np.arange(len(ordered) + 1))
    pj_l, piou_l = pj.tolist(), piou.tolist()

    alive = [True] * len(ordered)
    keep = []
    for i, det in enumerate(ordered):
        if not alive[i]:
            continue
        keep.append(det)
        fp = det.footprint
        for k in range(bounds[i], bounds[i + 1]):
            j = pj_l[k]
            if not alive[j]:
                continue
            if exact:
                iou = exact_iou(fp, ordered[j].footprint)
                if record is not None:
                    record(iou, piou_l[k])
            else:
                iou = piou_l[k]
            if iou >= iou_threshold:
                alive[j] = False
    return keep


def approx_nms(dets: Sequence[Detection], iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> list[Detection]:
    """Greedy class-aware NMS scoring overlap by axis-aligned box IoU."""
    return _greedy_nms(dets, iou_threshold, exact=False)


def exact_nms(dets: Sequence[Detection], iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> list[Detection]:
    """Greedy class-aware NMS scoring overlap by exact parallelogram IoU."""
    return _greedy_nms(dets, iou_threshold, exact=True)


def _median_time(fn: Callable[[], object], repetitions: int, warmup: int = 2) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def nms_benchmark(
    dets: Sequence[Detection],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    repetitions: int = 11,
) -> NmsReport:
    """Time both NMS variants and compare their overlap scores.

    The discrepancy is averaged over the pairs the exact pass clips, i.e. the
    same-class (kept, candidate) pairs whose boxes overlap. Pairs with disjoint
    boxes score 0 under both metrics and are not counted.
    """
    if len(dets) < 2:
        raise ValueError("benchmark needs at least two detections")
    pairs: list[tuple[float, float]] = []
    kept_exact = _greedy_nms(dets, iou_threshold, True, lambda e, a: pairs.append((e, a)))
    kept_approx = approx_nms(dets, iou_threshold)
    exact_time = _median_time(lambda: exact_nms(dets, iou_threshold), repetitions)
    approx_time = _median_time(lambda: approx_nms(dets, iou_threshold), repetitions)
    diffs = [abs(e - a) for e, a in pairs]
    ids_e = {id(d) for d in kept_exact}
    ids_a = {id(d) for d in kept_approx}
    union = ids_e | ids_a
    return NmsReport(
        kept_exact=len(kept_exact),
        kept_approx=len(kept_approx),
        mean_abs_iou_discrepancy=float(np.mean(diffs)) if diffs else 0.0,
        exact_time=exact_time,
        approx_time=approx_time,
        n_pairs=len(pairs),
        disagreement_rate=len(ids_e ^ ids_a) / len(union) if union else 0.0,
        pairs=pairs,
    )
