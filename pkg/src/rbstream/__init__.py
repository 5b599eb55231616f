"""Rotated-box detection toolkit for streaming fisheye perception.

Geometry, periodic angle losses, anchor-head decoding, a dual-flow feature
fusion reference and a latency-shifted detection evaluator.
"""

from .angleloss import AngleLossKind, LossEval, Norm, Variant, angle_loss, mod_pos
from .detloss import LossBreakdown, bce, total_loss
from .dfp import DfpWeights, conv1x1_bn_silu, dfp_fuse
from .estimators import ContourBoxFitter, RotatedBoxDecoder, StreamingEvaluator
from .geometry import (
    ConvexPolygon,
    Point2,
    RotatedBox,
    canonicalize,
    convex_hull,
    convex_intersection,
    corners,
    min_area_rect,
    polygon_area,
    rotated_iou,
)
from .headcodec import AnchorConfig, RawCellPrediction, assign_targets, decode, encode
from .streameval import (
    EvalReport,
    FrameRecord,
    Mode,
    Triplet,
    average_precision,
    build_triplets,
    evaluate,
    match_frame,
    nms_rotated,
    pr_curve,
)

__version__ = "0.1.0"
