"""Regression loss on triangle detections.

The center is compared with a squared error; the two front vertices are an
unordered pair and are compared with the Chamfer distance, so predicting them
in either order costs the same. The total is the unweighted sum of the two.

Scalar functions take ``Triangle25``/``Point2`` values. The ``batch_*``
functions work on ``(n, 3, 2)`` arrays (rows are ``p0, p1, p2``) and are what
the toy trainer uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Triangle25


class EmptySet(ValueError):
    """Chamfer distance requested on an empty point set."""


@dataclass(frozen=True)
class RegressionLossValue:
    total: float
    center_mse: float
    chamfer: float


@dataclass(frozen=True)
class LossGradient:
    d_p0: tuple[float, float]
    d_p1: tuple[float, float]
    d_p2: tuple[float, float]

    def as_array(self) -> np.ndarray:
        return np.array([self.d_p0, self.d_p1, self.d_p2], dtype=float)


def chamfer_distance(P: Sequence, Q: Sequence) -> float:
    """Symmetric mean squared nearest-neighbour distance between two point sets."""
    P = np.asarray(P, dtype=float).reshape(-1, 2)
    Q = np.asarray(Q, dtype=float).reshape(-1, 2)
    if len(P) == 0 or len(Q) == 0:
        raise EmptySet("chamfer distance needs two non-empty point sets")
    d = ((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=-1)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def center_mse(p0, p0_hat) -> float:
    """Squared Euclidean distance; no 1/2 and no averaging over coordinates."""
    dx = float(p0[0]) - float(p0_hat[0])
    dy = float(p0[1]) - float(p0_hat[1])
    return dx * dx + dy * dy


def _as_batch(tri) -> np.ndarray:
    arr = np.asarray(tri, dtype=float)
    return arr.reshape(-1, 3, 2)


def _pair_sqdist(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    # d[:, i, j] = |p_{i+1} - q_{j+1}|^2
    diff = pred[:, 1:, None, :] - gt[:, None, 1:, :]
    return diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]


def batch_regression_loss(pred, gt, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-row ``(center_mse, chamfer)`` for ``(n, 3, 2)`` prediction/label arrays.

    Coordinates are divided by ``scale`` first. The two-element sums below are
    written so swapping p1/p2 in either argument only commutes operands, which
    keeps the result bit-identical.
    """
    pred = _as_batch(pred) / scale
    gt = _as_batch(gt) / scale
    dc = pred[:, 0] - gt[:, 0]
    center = dc[:, 0] * dc[:, 0] + dc[:, 1] * dc[:, 1]
    d = _pair_sqdist(pred, gt)
    term_p = (np.minimum(d[:, 0, 0], d[:, 0, 1]) + np.minimum(d[:, 1, 0], d[:, 1, 1])) * 0.5
    term_q = (np.minimum(d[:, 0, 0], d[:, 1, 0]) + np.minimum(d[:, 0, 1], d[:, 1, 1])) * 0.5
    return center, term_p + term_q


def batch_regression_grad(pred, gt, scale: float = 1.0) -> np.ndarray:
    """Analytic gradient of ``center_mse + chamfer`` w.r.t. ``pred``, shape ``(n, 3, 2)``.

    At nearest-neighbour ties the gradient is routed through the bijective
    pairing with the lower cost (identity pairing when that is tied too).
    """
    pred_s = _as_batch(pred) / scale
    gt_s = _as_batch(gt) / scale
    n = len(pred_s)
    g = np.zeros((n, 3, 2))
    g[:, 0] = 2.0 * (pred_s[:, 0] - gt_s[:, 0])

    d = _pair_sqdist(pred_s, gt_s)
    identity = (d[:, 0, 0] + d[:, 1, 1]) <= (d[:, 0, 1] + d[:, 1, 0])
    P = pred_s[:, 1:]
    Q = gt_s[:, 1:]

    for i in (0, 1):
        # nearest label vertex for predicted vertex i (term averaged over |P| = 2)
        partner = np.where(identity, i, 1 - i)
        j = np.where(d[:, i, 0] < d[:, i, 1], 0, np.where(d[:, i, 0] > d[:, i, 1], 1, partner))
        q_near = Q[np.arange(n), j]
        g[:, 1 + i] = P[:, i] - q_near

    # each label vertex pulls its nearest predicted vertex (term averaged over |Q| = 2)
    pull = []
    for j in (0, 1):
        partner = np.where(identity, j, 1 - j)
        i = np.where(d[:, 0, j] < d[:, 1, j], 0, np.where(d[:, 0, j] > d[:, 1, j], 1, partner))
        pull.append(i)
    for i in (0, 1):
        m0 = (pull[0] == i)[:, None]
        m1 = (pull[1] == i)[:, None]
        s = np.where(m0, P[:, i] - Q[:, 0], 0.0) + np.where(m1, P[:, i] - Q[:, 1], 0.0)
        g[:, 1 + i] = g[:, 1 + i] + s

    # the 1/2 averaging and the 2 from the square cancel for the vertex terms
    return g / scale


def batch_ordered_mse(pred, gt, scale: float = 1.0) -> np.ndarray:
    diff = (_as_batch(pred) - _as_batch(gt)) / scale
    return (diff * diff).sum(axis=(1, 2))


def batch_ordered_mse_grad(pred, gt, scale: float = 1.0) -> np.ndarray:
    return 2.0 * (_as_batch(pred) - _as_batch(gt)) / (scale * scale)


def regression_loss(pred: Triangle25, gt: Triangle25, scale: float = 1.0) -> RegressionLossValue:
    center, cham = batch_regression_loss(pred, gt, scale)
    c, ch = float(center[0]), float(cham[0])
    return RegressionLossValue(total=c + ch, center_mse=c, chamfer=ch)


def regression_loss_grad(pred: Triangle25, gt: Triangle25, scale: float = 1.0) -> LossGradient:
    g = batch_regression_grad(pred, gt, scale)[0]
    return LossGradient(*(tuple(float(v) for v in row) for row in g))


def ordered_mse_loss(pred: Triangle25, gt: Triangle25, scale: float = 1.0) -> float:
    """Fixed-order squared error over all three points (the order-sensitive baseline)."""
    return float(batch_ordered_mse(pred, gt, scale)[0])


def tie_margin(pred, gt) -> np.ndarray:
    """Per-row smallest gap between competing nearest-neighbour distances, in px."""
    pred = _as_batch(pred)
    gt = _as_batch(gt)
    dist = np.sqrt(_pair_sqdist(pred, gt))
    m_rows = np.abs(dist[:, :, 0] - dist[:, :, 1]).min(axis=1)
    m_cols = np.abs(dist[:, 0, :] - dist[:, 1, :]).min(axis=1)
    return np.minimum(m_rows, m_cols)


def mean_vertex_error(pred, gt) -> np.ndarray:
    """Per-row mean distance over (p0, p1, p2) using the better front-vertex pairing."""
    pred = _as_batch(pred)
    gt = _as_batch(gt)
    e0 = np.linalg.norm(pred[:, 0] - gt[:, 0], axis=-1)
    direct = np.linalg.norm(pred[:, 1:] - gt[:, 1:], axis=-1).sum(axis=1)
    swapped = np.linalg.norm(pred[:, 1:] - gt[:, 2:0:-1], axis=-1).sum(axis=1)
    return (e0 + np.minimum(direct, swapped)) / 3.0


__all__ = [
    "EmptySet",
    "LossGradient",
    "RegressionLossValue",
    "batch_ordered_mse",
    "batch_ordered_mse_grad",
    "batch_regression_grad",
    "batch_regression_loss",
    "center_mse",
    "chamfer_distance",
    "mean_vertex_error",
    "ordered_mse_loss",
    "regression_loss",
    "regression_loss_grad",
    "tie_margin",
]
