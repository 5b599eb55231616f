"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import NonPositiveExtent


def check_boxes(X, with_conf: bool = False) -> np.ndarray:
    """Validate an ``(n, 5)`` or ``(n, 6)`` box array ``cx, cy, w, h, angle[, conf]``."""
    n_cols = 6 if with_conf else 5
    X = check_array(X, dtype=float, ensure_2d=True, ensure_min_samples=0)
    if X.shape[1] != n_cols:
        raise ValueError(f"expected {n_cols} columns, got {X.shape[1]}")
    if np.any(X[:, 2:4] <= 0):
        raise NonPositiveExtent("box widths and heights must be positive")
    if with_conf and np.any((X[:, 5] < 0) | (X[:, 5] > 1)):
        raise ValueError("confidences must lie in [0, 1]")
    return X


def check_contour(points) -> np.ndarray:
    pts = check_array(points, dtype=float, ensure_2d=True, ensure_min_samples=1)
    if pts.shape[1] != 2:
        raise ValueError(f"contour must be (n, 2), got {pts.shape}")
    return pts


def check_contours(X) -> list:
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    return [check_contour(c) for c in X]


def check_probability(p, name="probability") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p
