"""scikit-learn style wrappers.

``FootprintDecoder`` turns raw per-anchor predictions into NMS-filtered
detections. ``OffsetTableRegressor`` fits a per-anchor offset table to a
scene's labels and predicts the decoded detections. Both expose
``get_params``/``set_params`` through ``BaseEstimator`` so they can be cloned
and grid-searched.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_footprints, check_unit_interval
from .assignment import build_anchor_grid, check_eta
from .codec import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_IOU_THRESHOLD,
    Detection,
    RawPrediction,
    approx_nms,
    decode_predictions,
    exact_nms,
)
from .metrics import evaluate
from .toytrain import TrainConfig, decode_and_eval, train_offsets


class FootprintDecoder(TransformerMixin, BaseEstimator):
    """Decode raw predictions, filter by confidence, and suppress duplicates.

    Parameters
    ----------
    image_size : (width, height) in px.
    stride : anchor spacing in px.
    conf_threshold : minimum max-class score kept.
    iou_threshold : NMS suppression threshold.
    nms : ``"approx"`` (box IoU) or ``"exact"`` (polygon IoU).
    """

    def __init__(
        self,
        image_size=(1280, 720),
        stride=16.0,
        conf_threshold=DEFAULT_CONF_THRESHOLD,
        iou_threshold=DEFAULT_IOU_THRESHOLD,
        nms="approx",
    ):
        self.image_size = image_size
        self.stride = stride
        self.conf_threshold = conf_threshold
        self.iou_threshold = iou_threshold
        self.nms = nms

    def fit(self, X=None, y=None):
        if self.nms not in ("approx", "exact"):
            raise ValueError(f"nms must be 'approx' or 'exact', got {self.nms!r}")
        check_unit_interval(self.conf_threshold, "conf_threshold")
        check_unit_interval(self.iou_threshold, "iou_threshold")
        self.grid_ = build_anchor_grid(self.image_size[0], self.image_size[1], self.stride)
        self.n_dropped_ = 0
        return self

    def transform(self, X: Sequence[RawPrediction]) -> list[Detection]:
        check_is_fitted(self, "grid_")
        dets, dropped = decode_predictions(list(X), self.grid_, self.conf_threshold)
        self.n_dropped_ = dropped
        nms = approx_nms if self.nms == "approx" else exact_nms
        return nms(dets, self.iou_threshold)


class OffsetTableRegressor(BaseEstimator):
    """Fit per-anchor offsets to one scene's footprints by gradient descent.

    ``fit(X)`` takes labels, parallelograms, or an ``(n, 4, 2)`` vertex
    array. ``predict()`` returns the decoded, NMS-filtered detections and
    ``score(X)`` returns mAP@50 against ``X``.
    """

    def __init__(
        self,
        image_size=(1280, 720),
        stride=16.0,
        eta=None,
        loss="chamfer_mse",
        lr=0.6,
        steps=500,
        flip_prob=0.0,
        random_state=0,
    ):
        self.image_size = image_size
        self.stride = stride
        self.eta = eta
        self.loss = loss
        self.lr = lr
        self.steps = steps
        self.flip_prob = flip_prob
        self.random_state = random_state

    def fit(self, X, y=None):
        labels = check_footprints(X)
        grid = build_anchor_grid(self.image_size[0], self.image_size[1], self.stride)
        eta = None if self.eta is None else check_eta(self.eta)
        cfg = TrainConfig(self.loss, self.lr, self.steps, self.flip_prob, self.random_state)
        self.trace_ = train_offsets(labels, grid, eta, cfg)
        self.table_ = self.trace_.table
        self.labels_ = labels
        self.loss_curve_ = np.asarray(self.trace_.losses + [self.trace_.final_loss])
        return self

    def predict(self, X=None) -> list[Detection]:
        check_is_fitted(self, "table_")
        _, kept = decode_and_eval(self.table_, self.labels_)
        return kept

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "table_")
        labels = check_footprints(X)
        return evaluate({"scene": self.predict()}, {"scene": labels}).map50
