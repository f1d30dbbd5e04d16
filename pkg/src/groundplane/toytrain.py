"""Gradient descent on per-anchor offset tables.

There is no network here: every active anchor owns its own three offset
vectors, initialised at zero, and plain gradient descent fits them to the
assigned label triangles. That isolates the regression loss and the label
assignment from any representation effects.

Two loss variants are available: ``chamfer_mse`` (center squared error plus
Chamfer distance on the front vertices) and ``ordered_mse`` (fixed-order
squared error). ``flip_prob`` swaps the label's front vertices at random each
step to mimic inconsistent vertex order in the targets.

Step size note: from zero offsets both predicted front vertices start at the
anchor, so they are first pulled toward the same label vertex. With a step
below 0.5 (per-anchor curvature is 2) one of them slides toward the midpoint
of the label's front edge and never crosses it; the Chamfer gradient there
balances. Steps in (0.5, 1) overshoot that bisector and converge. The default
``lr=0.6`` is chosen for that reason.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import loss as L
from .assignment import AnchorGrid, Assignment, assign_anchors, build_training_targets
from .codec import Detection, approx_nms
from .geometry import (
    EPS_AREA,
    Parallelogram,
    Triangle25,
    reconstruct_parallelogram,
    triangle_area,
    triangle_from_parallelogram,
)
from .metrics import EvalReport, GroundTruthLabel, evaluate

LOSS_VARIANTS = ("chamfer_mse", "ordered_mse")


class NoActiveAnchors(ValueError):
    """No anchor lies within eta of some label; check eta and stride."""


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "chamfer_mse"
    lr: float = 0.6
    steps: int = 500
    flip_prob: float = 0.0
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.loss not in LOSS_VARIANTS:
            raise ValueError(f"loss must be one of {LOSS_VARIANTS}, got {self.loss!r}")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass
class OffsetTable:
    grid: AnchorGrid
    assignments: list[Assignment]
    offsets: np.ndarray  # (n_active, 3, 2)

    @property
    def anchors(self) -> np.ndarray:
        return self.grid.anchors[[a.anchor_index for a in self.assignments]]

    def triangles(self) -> np.ndarray:
        return self.offsets + self.anchors[:, None, :]


@dataclass
class TrainTrace:
    losses: list[float]
    final_loss: float
    vertex_errors: np.ndarray
    table: OffsetTable
    report: EvalReport | None = None
    n_detections: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mean_vertex_error(self) -> float:
        return float(self.vertex_errors.mean()) if len(self.vertex_errors) else 0.0

    @property
    def aiou(self):
        return None if self.report is None else self.report.aiou

    @property
    def maoe(self):
        return None if self.report is None else self.report.maoe

    def to_csv(self) -> str:
        """One row per state: the ``steps`` pre-update losses, then the final loss."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss"])
        for k, v in enumerate(self.losses + [self.final_loss]):
            w.writerow([k, repr(float(v))])
        return buf.getvalue()


def _loss_and_grad(variant: str, pred: np.ndarray, target: np.ndarray, scale: float):
    if variant == "chamfer_mse":
        center, cham = L.batch_regression_loss(pred, target, scale)
        return center + cham, L.batch_regression_grad(pred, target, scale)
    return L.batch_ordered_mse(pred, target, scale), L.batch_ordered_mse_grad(pred, target, scale)


def label_triangles(labels: Sequence) -> list[Triangle25]:
    out = []
    for lab in labels:
        fp = lab.footprint if isinstance(lab, GroundTruthLabel) else lab
        out.append(triangle_from_parallelogram(fp))
    return out


def init_table(labels: Sequence, grid: AnchorGrid, eta: float | None = None) -> tuple[OffsetTable, np.ndarray]:
    """Zero-initialised table over the active anchors plus their target triangles."""
    tris = label_triangles(labels)
    assignments = assign_anchors(grid, tris, eta)
    covered = {a.gt_index for a in assignments}
    missing = [k for k in range(len(tris)) if k not in covered]
    if not assignments or missing:
        raise NoActiveAnchors(f"labels without any active anchor: {missing or list(range(len(tris)))}")
    targets = build_training_targets(assignments, grid, tris)
    table = OffsetTable(grid, assignments, np.zeros((len(assignments), 3, 2)))
    return table, targets + table.anchors[:, None, :]


def train_offsets(
    labels: Sequence, grid: AnchorGrid, eta: float | None = None, cfg: TrainConfig = TrainConfig()
) -> TrainTrace:
    """Fit the offset table with plain gradient descent.

    Anchors are independent, so the step is taken on the sum of per-anchor
    losses; ``losses`` records the mean per-anchor loss before each update.
    """
    table, gt = init_table(labels, grid, eta)
    anchors = table.anchors[:, None, :]
    rng = np.random.default_rng(cfg.seed)
    losses: list[float] = []
    for _ in range(cfg.steps):
        target = gt
        if cfg.flip_prob > 0:
            flip = rng.random(len(gt)) < cfg.flip_prob
            target = gt.copy()
            target[flip, 1], target[flip, 2] = gt[flip, 2], gt[flip, 1]
        value, grad = _loss_and_grad(cfg.loss, table.offsets + anchors, target, cfg.scale)
        losses.append(float(value.mean()))
        table.offsets = table.offsets - cfg.lr * grad
    final, _ = _loss_and_grad(cfg.loss, table.offsets + anchors, gt, cfg.scale)
    errors = L.mean_vertex_error(table.offsets + anchors, gt)
    trace = TrainTrace(losses, float(final.mean()), errors, table)
    report, dets = decode_and_eval(table, labels)
    trace.report = report
    trace.n_detections = len(dets)
    return trace


def table_detections(table: OffsetTable, eps_area: float = EPS_AREA) -> tuple[list[Detection], int]:
    """Decode every active anchor at confidence 1.0, dropping degenerate triangles."""
    dets, dropped = [], 0
    for tri_arr in table.triangles():
        tri = Triangle25(*(tuple(map(float, p)) for p in tri_arr))
        if triangle_area(tri) < eps_area:
            dropped += 1
            continue
        dets.append(Detection(reconstruct_parallelogram(tri, eps_area), 0, 1.0))
    return dets, dropped


def decode_and_eval(
    table: OffsetTable,
    labels: Sequence,
    conf_threshold: float = 0.1,
    iou_threshold: float = 0.5,
    image_id: str = "train",
) -> tuple[EvalReport, list[Detection]]:
    """Decode, confidence-filter, run box-IoU NMS, and score against the labels."""
    dets, _ = table_detections(table)
    dets = [d for d in dets if d.confidence >= conf_threshold]
    kept = approx_nms(dets, iou_threshold)
    gts = [lab if isinstance(lab, GroundTruthLabel) else GroundTruthLabel(lab) for lab in labels]
    return evaluate({image_id: kept}, {image_id: gts}), kept


# -- gradient checking --------------------------------------------------------


def gradient_check(
    variant: str, pred, gt, h: float = 1e-6, min_margin: float = 1e-3
) -> float | None:
    """Max relative deviation between analytic and central-difference gradients.

    Relative to ``max(|analytic|_inf, |numeric|_inf, 1)``, so it falls back to
    the absolute error for tiny gradients. Returns ``None`` (skipped) when
    ``pred`` sits within ``min_margin`` px of a nearest-neighbour tie.
    """
    pred = np.asarray(pred, dtype=float).reshape(1, 3, 2)
    gt = np.asarray(gt, dtype=float).reshape(1, 3, 2)
    if variant == "chamfer_mse" and L.tie_margin(pred, gt)[0] <= min_margin:
        return None
    _, analytic = _loss_and_grad(variant, pred, gt, 1.0)
    analytic = analytic[0]
    numeric = np.zeros((3, 2))
    for r in range(3):
        for c in range(2):
            up, down = pred.copy(), pred.copy()
            up[0, r, c] += h
            down[0, r, c] -= h
            fu, _ = _loss_and_grad(variant, up, gt, 1.0)
            fd, _ = _loss_and_grad(variant, down, gt, 1.0)
            numeric[r, c] = (fu[0] - fd[0]) / (2 * h)
    denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1.0)
    return float(np.abs(analytic - numeric).max() / denom)


@dataclass
class GradCheckSummary:
    max_rel_err: float
    checked: int
    skipped: int
    errors: list[float]

    def passed(self, tol: float = 1e-5) -> bool:
        return self.checked > 0 and self.max_rel_err < tol


def random_pair(rng: np.random.Generator, extent: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
    gt = rng.uniform(0, extent, (3, 2))
    pred = gt + rng.normal(0, extent / 5, (3, 2))
    return pred, gt


def gradient_check_suite(
    samples: int = 1000, h: float = 1e-6, seed: int = 0, variant: str = "chamfer_mse"
) -> GradCheckSummary:
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    errors, skipped = [], 0
    for _ in range(samples):
        pred, gt = random_pair(rng)
        e = gradient_check(variant, pred, gt, h)
        if e is None:
            skipped += 1
        else:
            errors.append(e)
    return GradCheckSummary(max(errors) if errors else float("nan"), len(errors), skipped, errors)


def parallelograms_from_array(arr) -> list[Parallelogram]:
    return [Parallelogram(v) for v in np.asarray(arr, dtype=float).reshape(-1, 4, 2)]
