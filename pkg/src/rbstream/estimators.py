"""scikit-learn compatible wrappers around the functional core.

These follow the usual estimator contract: constructor arguments are stored
unchanged, ``fit`` returns ``self`` and sets trailing-underscore attributes,
and ``get_params`` / ``set_params`` / ``clone`` work as expected.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import headcodec
from ._validation import check_contours, check_probability
from .exceptions import DegenerateContour
from .geometry import RotatedBox, canonicalize, min_area_rect
from .streameval import DEFAULT_CONF_MIN, IOU_THRESHOLDS, evaluate


class ContourBoxFitter(TransformerMixin, BaseEstimator):
    """Fit a canonical minimum-area rotated box to each contour.

    Parameters
    ----------
    on_degenerate : {"nan", "raise"}, default="nan"
        Collinear or too-short contours give a row of NaN, or raise
        :class:`~rbstream.exceptions.DegenerateContour`.

    Examples
    --------
    >>> ContourBoxFitter().fit_transform([[(0, 0), (4, 0), (4, 2), (0, 2)]]).round(4)
    array([[ 2.    ,  1.    ,  2.    ,  4.    , -1.5708]])
    """

    def __init__(self, on_degenerate="nan"):
        self.on_degenerate = on_degenerate

    def fit(self, X=None, y=None):
        if self.on_degenerate not in ("nan", "raise"):
            raise ValueError(f"on_degenerate must be 'nan' or 'raise', got {self.on_degenerate!r}")
        self.n_features_out_ = 5
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        contours = check_contours(X)
        out = np.full((len(contours), 5), np.nan)
        for k, c in enumerate(contours):
            try:
                out[k] = min_area_rect(c).as_tuple()
            except DegenerateContour:
                if self.on_degenerate == "raise":
                    raise
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array(["cx", "cy", "w", "h", "angle"], dtype=object)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags


class RotatedBoxDecoder(TransformerMixin, BaseEstimator):
    """Decode per-level head tensors into a flat ``(n, 6)`` box array.

    Parameters
    ----------
    anchors : str or sequence, default="woodscape"
        Preset name or three levels of three ``(w, h)`` pairs.
    strides : tuple of int, default=(8, 16, 32)
    image_size : int, default=640
    alpha, beta : float
        Decoded angles lie in ``[-beta, alpha - beta]``.
    conf_min : float or None, default=None
        Keep only boxes with confidence above this value.
    canonical : bool, default=False
        Canonicalise the decoded boxes.
    """

    def __init__(self, anchors="woodscape", strides=(8, 16, 32), image_size=640,
                 alpha=2 * math.pi, beta=math.pi, conf_min=None, canonical=False):
        self.anchors = anchors
        self.strides = strides
        self.image_size = image_size
        self.alpha = alpha
        self.beta = beta
        self.conf_min = conf_min
        self.canonical = canonical

    def fit(self, X=None, y=None):
        anchors = headcodec.PRESETS[self.anchors] if isinstance(self.anchors, str) else self.anchors
        self.anchor_config_ = headcodec.AnchorConfig.from_anchors(
            anchors, strides=tuple(self.strides), image_size=self.image_size, alpha=self.alpha, beta=self.beta
        )
        if self.conf_min is not None:
            check_probability(self.conf_min, "conf_min")
        return self

    def transform(self, X):
        check_is_fitted(self, "anchor_config_")
        cfg = self.anchor_config_
        if len(X) != len(cfg.levels):
            raise ValueError(f"expected {len(cfg.levels)} level tensors, got {len(X)}")
        rows = [headcodec.decode_level(r, cfg, k).reshape(-1, 6) for k, r in enumerate(X)]
        boxes = np.concatenate(rows, axis=0)
        if self.conf_min is not None:
            boxes = boxes[boxes[:, 5] > self.conf_min]
        if self.canonical:
            for k in range(len(boxes)):
                b = canonicalize(RotatedBox(*boxes[k, :5]))
                boxes[k, :5] = b.as_tuple()
        return boxes


class StreamingEvaluator(BaseEstimator):
    """Latency-shifted detection evaluator.

    ``fit`` stores the ground-truth frames; ``evaluate`` scores detection
    frames against the ground truth ``shift`` frames later and ``score``
    returns the mean AP over the IoU thresholds.

    Parameters
    ----------
    shift : int, default=1
    conf_min : float, default=0.01
    iou_thresholds : sequence of float or None
        Defaults to 0.50, 0.55, ..., 0.95.
    workers : int, default=1
    """

    def __init__(self, shift=1, conf_min=DEFAULT_CONF_MIN, iou_thresholds=None, workers=1):
        self.shift = shift
        self.conf_min = conf_min
        self.iou_thresholds = iou_thresholds
        self.workers = workers

    def fit(self, gt_frames, y=None):
        if int(self.shift) < 0:
            raise ValueError("shift must be non-negative")
        check_probability(self.conf_min, "conf_min")
        self.gt_frames_ = list(gt_frames)
        self.n_sequences_ = len({f.sequence_id for f in self.gt_frames_})
        return self

    def evaluate(self, det_frames):
        check_is_fitted(self, "gt_frames_")
        thresholds = IOU_THRESHOLDS if self.iou_thresholds is None else tuple(self.iou_thresholds)
        self.report_ = evaluate(self.gt_frames_, list(det_frames), int(self.shift), self.conf_min, thresholds, self.workers)
        return self.report_

    def score(self, det_frames, y=None):
        return self.evaluate(det_frames).ap_mean
