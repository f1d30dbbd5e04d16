"""Synthetic scenes: 3D vehicle boxes on a ground plane seen by a roadside camera.

Labels are the projected bottom faces. Under an affine (weak-perspective)
camera they are exact parallelograms; under a pinhole camera they are general
quadrilaterals and get a least-squares parallelogram fit with its residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import AnchorGrid, build_anchor_grid
from .codec import Detection, RawPrediction, encode_prediction
from .geometry import (
    EPS_AREA,
    DegenerateTriangle,
    Parallelogram,
    Point2,
    Triangle25,
    as_convex_polygon,
    convex_intersection,
    reconstruct_parallelogram,
    triangle_from_parallelogram,
)
from .metrics import GroundTruthLabel

EPS_DEPTH = 0.1
MASK64 = (1 << 64) - 1


class BehindCamera(ValueError):
    pass


class CollinearCorners(ValueError):
    pass


class PlacementFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Box3D:
    """Vehicle box; ``center`` is (x, y, z) with z the ground height of the bottom face."""

    center: tuple[float, float, float]
    length: float
    width: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"box dimensions must be positive: {self.length} x {self.width}")


def bottom_face(box: Box3D) -> np.ndarray:
    """Bottom corners, counter-clockwise from above: front-right, front-left, rear-left, rear-right.

    The front edge (first two corners) lies along the heading ``yaw``.
    """
    cx, cy, cz = box.center
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = box.length / 2.0, box.width / 2.0
    local = [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)]
    return np.array([[cx + c * u - s * v, cy + s * u + c * v, cz] for u, v in local])


@dataclass(frozen=True)
class CameraModel:
    """World-to-camera rigid transform plus intrinsics.

    ``affine`` mode is weak perspective: camera-frame x/y scaled by ``scale``
    (px per m) and shifted to the principal point. ``pinhole`` divides by depth.
    """

    mode: str = "pinhole"
    rotation: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    translation: tuple = (0.0, 0.0, 0.0)
    fx: float = 600.0
    fy: float = 600.0
    cx: float = 640.0
    cy: float = 360.0
    scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("affine", "pinhole"):
            raise ValueError(f"unknown camera mode {self.mode!r}")
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ValueError("rotation must be a proper orthonormal 3x3 matrix")

    def to_camera(self, p) -> np.ndarray:
        return np.asarray(self.rotation) @ np.asarray(p, dtype=float) + np.asarray(self.translation)


def elevated_camera(
    height: float = 10.0,
    pitch_deg: float = 45.0,
    focal: float = 600.0,
    image_size: tuple[int, int] = (1280, 720),
    mode: str = "pinhole",
    distance_scale: float = 1.0,
) -> CameraModel:
    """Camera looking down at the world origin from behind (-y), roll 0.

    ``distance_scale`` moves the camera back along its viewing ray and zooms
    by the same factor, so the scene keeps its image size while perspective
    effects shrink. In affine mode the scale is the pinhole magnification at
    the origin, so both modes agree there.
    """
    pitch = math.radians(pitch_deg)
    dist = distance_scale * height / math.sin(pitch)
    f = focal * distance_scale
    # camera axes in world coordinates: x right, y down (image), z forward
    fwd = np.array([0.0, math.cos(pitch), -math.sin(pitch)])
    right = np.array([1.0, 0.0, 0.0])
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    pos = -dist * fwd
    t = -R @ pos
    w, h = image_size
    return CameraModel(
        mode=mode,
        rotation=tuple(map(tuple, R.tolist())),
        translation=tuple(t.tolist()),
        fx=f,
        fy=f,
        cx=w / 2.0,
        cy=h / 2.0,
        scale=f / dist,
    )


def project_point(cam: CameraModel, p) -> Point2:
    x, y, z = cam.to_camera(p)
    if cam.mode == "affine":
        return Point2(cam.scale * x + cam.cx, cam.scale * y + cam.cy)
    if z <= EPS_DEPTH:
        raise BehindCamera(f"point at depth {z:.3f} m is not in front of the camera")
    return Point2(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy)


def fit_parallelogram(quad: Sequence) -> Parallelogram:
    """Least-squares parallelogram with vertex order matched to ``quad``.

    The center is the quad centroid and the half-diagonals are
    ``(q1 - q3) / 2`` and ``(q2 - q4) / 2``.
    """
    q = np.asarray(quad, dtype=float).reshape(4, 2)
    c = q.mean(axis=0)
    v1 = c + (q[0] - q[2]) / 2.0
    v2 = c + (q[1] - q[3]) / 2.0
    # far corners by reflection, exactly as decoding rebuilds them
    return Parallelogram([v1, v2, 2.0 * c - v1, 2.0 * c - v2], c)


def fit_residual(quad: Sequence, par: Parallelogram) -> float:
    """Largest vertex distance between ``quad`` and ``par``, in px."""
    q = np.asarray(quad, dtype=float).reshape(4, 2)
    return float(np.linalg.norm(q - par.as_array(), axis=1).max())


def box_to_label(box: Box3D, cam: CameraModel) -> tuple[Parallelogram, float]:
    """Project the bottom face and return ``(footprint, max vertex residual px)``."""
    quad = [project_point(cam, p) for p in bottom_face(box)]
    par = fit_parallelogram(quad)
    return par, fit_residual(quad, par)


def complete_lshape(pa, pb, pc) -> Parallelogram:
    """Parallelogram from three annotated corners, ``pb`` being the shared corner."""
    pa, pb, pc = (np.asarray(p, dtype=float) for p in (pa, pb, pc))
    cross = (pa[0] - pb[0]) * (pc[1] - pb[1]) - (pa[1] - pb[1]) * (pc[0] - pb[0])
    if abs(cross) < EPS_AREA:
        raise CollinearCorners("L-shape corners are collinear or repeated")
    pd = pa + pc - pb
    return Parallelogram([pa, pb, pc, pd], (pa + pc) / 2.0)


# -- scenes -----------------------------------------------------------------


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seeds(master: int, n: int) -> list[int]:
    """Per-scene seeds: the first ``n`` splitmix64 outputs from ``master``."""
    out = []
    state = int(master) & MASK64
    for _ in range(n):
        state, z = splitmix64(state)
        out.append(z)
    return out


@dataclass(frozen=True)
class SceneConfig:
    vehicles: tuple[int, int] = (8, 12)
    length: tuple[float, float] = (3.5, 5.5)
    width: tuple[float, float] = (1.6, 2.1)
    region_x: tuple[float, float] = (-12.0, 12.0)
    region_y: tuple[float, float] = (-6.0, 10.0)
    yaw: tuple[float, float] = (0.0, 2 * math.pi)
    seed: int = 0
    predictions_per_vehicle: int = 1
    jitter_sigma: float = 0.0
    confidence: tuple[float, float] = (0.5, 1.0)
    stride: float = 16.0
    image_size: tuple[int, int] = (1280, 720)
    max_attempts: int = 200

    def __post_init__(self):
        for name in ("vehicles", "length", "width", "region_x", "region_y", "yaw", "confidence"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} bounds out of order: {lo} > {hi}")
        if self.vehicles[0] < 0 or self.length[0] <= 0 or self.width[0] <= 0:
            raise ValueError("vehicle count and sizes must be positive")
        if not 0.0 <= self.confidence[0] <= self.confidence[1] <= 1.0:
            raise ValueError("confidence range must lie in [0, 1]")
        if self.jitter_sigma < 0 or self.predictions_per_vehicle < 0:
            raise ValueError("jitter and prediction count must be non-negative")


@dataclass
class Scene:
    image_id: str
    boxes: list[Box3D]
    labels: list[GroundTruthLabel]
    residuals: list[float]
    predictions: list[Detection] = field(default_factory=list)
    raw: list[RawPrediction] = field(default_factory=list)


def _world_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    inter = convex_intersection(as_convex_polygon(a[:, :2]), as_convex_polygon(b[:, :2]))
    return inter.area > EPS_AREA


def place_boxes(cfg: SceneConfig, rng: np.random.Generator) -> list[Box3D]:
    n = int(rng.integers(cfg.vehicles[0], cfg.vehicles[1] + 1))
    boxes: list[Box3D] = []
    faces: list[np.ndarray] = []
    attempts = 0
    while len(boxes) < n:
        attempts += 1
        if attempts > cfg.max_attempts * max(n, 1):
            raise PlacementFailure(f"placed {len(boxes)} of {n} vehicles before giving up")
        box = Box3D(
            (float(rng.uniform(*cfg.region_x)), float(rng.uniform(*cfg.region_y)), 0.0),
            float(rng.uniform(*cfg.length)),
            float(rng.uniform(*cfg.width)),
            float(rng.uniform(*cfg.yaw)),
        )
        face = bottom_face(box)
        if any(_world_overlap(face, f) for f in faces):
            continue
        boxes.append(box)
        faces.append(face)
    return boxes


def jitter_predictions(
    labels: Sequence[GroundTruthLabel],
    sigma: float,
    per_vehicle: int,
    confidence: tuple[float, float],
    seed: int,
) -> list[Detection]:
    """Noisy copies of the labels. The noise draws do not depend on ``sigma``,
    so a sweep over ``sigma`` perturbs along the same directions."""
    rng = np.random.default_rng([seed, 1])
    out = []
    for lab in labels:
        tri = np.asarray(triangle_from_parallelogram(lab.footprint), dtype=float)
        for _ in range(per_vehicle):
            z = rng.standard_normal((3, 2))
            conf = float(rng.uniform(*confidence))
            noisy = tri + sigma * z
            try:
                fp = reconstruct_parallelogram(Triangle25(*(Point2(*p) for p in noisy)))
            except DegenerateTriangle:
                continue
            out.append(Detection(fp, lab.class_id, conf))
    return out


def raw_from_detections(dets: Sequence[Detection], grid: AnchorGrid) -> list[RawPrediction]:
    """Encode each detection on the anchor of the cell containing its center."""
    out = []
    for d in dets:
        tri = triangle_from_parallelogram(d.footprint)
        idx = grid.nearest_index(tri.p0)
        out.append(encode_prediction(tri, grid, idx, [d.confidence]))
    return out


def generate_scene(
    cfg: SceneConfig,
    cam: CameraModel | None = None,
    image_id: str = "scene_0000",
    sigma: float | None = None,
) -> Scene:
    """Deterministic scene for ``cfg.seed``: boxes, labels, and noisy predictions."""
    cam = cam or elevated_camera(image_size=cfg.image_size)
    rng = np.random.default_rng([cfg.seed, 0])
    boxes = place_boxes(cfg, rng)
    labels, residuals = [], []
    for b in boxes:
        par, res = box_to_label(b, cam)
        labels.append(GroundTruthLabel(par, 0))
        residuals.append(res)
    sigma = cfg.jitter_sigma if sigma is None else sigma
    preds = jitter_predictions(labels, sigma, cfg.predictions_per_vehicle, cfg.confidence, cfg.seed)
    grid = build_anchor_grid(cfg.image_size[0], cfg.image_size[1], cfg.stride)
    return Scene(image_id, boxes, labels, residuals, preds, raw_from_detections(preds, grid))


def generate_scenes(
    cfg: SceneConfig, n: int, cam: CameraModel | None = None, map_fn=map
) -> list[Scene]:
    seeds = derive_seeds(cfg.seed, n)

    def one(k):
        sub = SceneConfig(**{**cfg.__dict__, "seed": seeds[k]})
        return generate_scene(sub, cam, image_id=f"scene_{k:04d}")

    return list(map_fn(one, range(n)))


def synthetic_detections(
    n: int,
    seed: int = 0,
    per_vehicle: int = 10,
    sigma: float = 4.0,
    cfg: SceneConfig | None = None,
    cam: CameraModel | None = None,
) -> list[Detection]:
    """About ``n`` noisy detections for NMS benchmarking.

    Default scenes are generated one after another and tiled side by side in a
    single image plane, so footprints from different scenes never interact.
    """
    cfg = cfg or SceneConfig(predictions_per_vehicle=per_vehicle, jitter_sigma=sigma, confidence=(0.1, 1.0))
    cam = cam or elevated_camera(image_size=cfg.image_size)
    out: list[Detection] = []
    state = int(seed) & MASK64
    cursor = 0.0
    while len(out) < n:
        state, sub_seed = splitmix64(state)
        scene = generate_scene(SceneConfig(**{**cfg.__dict__, "seed": sub_seed}), cam)
        if not scene.predictions:
            continue
        pts = np.concatenate([d.footprint.as_array() for d in scene.predictions])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        dx, dy = cursor - lo[0], -lo[1]
        for d in scene.predictions:
            out.append(Detection(d.footprint.translate(dx, dy), d.class_id, d.confidence))
        cursor += hi[0] - lo[0] + 100.0
    return out[:n]


def toy_scene(seed: int = 0, vehicles: int = 3) -> Scene:
    """Small fixed scene used by the toy trainer: a few cars near the image center."""
    cfg = SceneConfig(vehicles=(vehicles, vehicles), region_x=(-8.0, 8.0), region_y=(-4.0, 6.0), seed=seed)
    return generate_scene(cfg, image_id=f"toy_{seed}")
