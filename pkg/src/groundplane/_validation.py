"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .geometry import Parallelogram
from .metrics import GroundTruthLabel


def check_points(X, n_points: int, name: str = "X") -> np.ndarray:
    """Coerce to a finite ``(n, n_points, 2)`` float array."""
    if isinstance(X, np.ndarray):
        arr = X
    else:
        arr = np.asarray([np.asarray(x, dtype=float) for x in X], dtype=float) if len(X) else np.zeros((0, n_points, 2))
    flat = check_array(
        arr.reshape(len(arr), -1), dtype=float, ensure_all_finite=True, ensure_min_samples=0, input_name=name
    )
    if flat.shape[1] != 2 * n_points:
        raise ValueError(f"{name} must have shape (n, {n_points}, 2), got {arr.shape}")
    return flat.reshape(-1, n_points, 2)


def check_footprints(X) -> list[GroundTruthLabel]:
    """Accept labels, parallelograms, or an ``(n, 4, 2)`` vertex array."""
    X = list(X) if not isinstance(X, np.ndarray) else X
    if isinstance(X, list) and X and isinstance(X[0], GroundTruthLabel):
        return X
    if isinstance(X, list) and X and isinstance(X[0], Parallelogram):
        return [GroundTruthLabel(p) for p in X]
    arr = check_points(X, 4)
    return [GroundTruthLabel(Parallelogram(v)) for v in arr]


def check_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
