"""Ground-plane (2.5D) parallelogram detection: geometry, loss, assignment,
decoding/NMS, metrics, synthetic data, and a toy offset trainer."""

from .assignment import AnchorGrid, Assignment, assign_anchors, build_anchor_grid, build_training_targets
from .codec import Detection, RawPrediction, approx_nms, decode, exact_nms, filter_confidence, nms_benchmark
from .geometry import (
    ConvexPolygon,
    Parallelogram,
    Point2,
    Rect,
    Triangle25,
    aabb,
    aabb_iou,
    convex_intersection,
    exact_iou,
    reconstruct_parallelogram,
    shoelace_area,
    triangle,
    triangle_from_parallelogram,
)
from .loss import chamfer_distance, ordered_mse_loss, regression_loss, regression_loss_grad
from .datagen import SceneConfig, generate_scene, toy_scene
from .metrics import EvalReport, GroundTruthLabel, evaluate, match_detections
from .toytrain import TrainConfig, train_offsets

__version__ = "0.1.0"
