"""Forward reference of the dual-flow feature fusion.

Feature maps are ``(C, H, W)`` float arrays. The dynamic flow sends the
current and previous maps through one shared 1x1 convolution, an
inference-mode batch norm and SiLU, halving the channels, and concatenates
the two halves. The static flow adds the current map back as a residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeMismatch


@dataclass(frozen=True)
class DfpWeights:
    """Shared 1x1 convolution plus per-channel batch-norm affine.

    Attributes
    ----------
    conv : ndarray, shape (C/2, C)
    bias : ndarray, shape (C/2,)
    bn_scale, bn_shift : ndarray, shape (C/2,)
    """

    conv: np.ndarray
    bias: np.ndarray
    bn_scale: np.ndarray
    bn_shift: np.ndarray

    def __post_init__(self):
        for name in ("conv", "bias", "bn_scale", "bn_shift"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        out_c, in_c = self.conv.shape
        if in_c != 2 * out_c:
            raise ShapeMismatch(f"conv must map C to C/2 channels, got {self.conv.shape}")
        for name in ("bias", "bn_scale", "bn_shift"):
            if getattr(self, name).shape != (out_c,):
                raise ShapeMismatch(f"{name} must have shape ({out_c},)")

    @property
    def in_channels(self) -> int:
        return self.conv.shape[1]

    @classmethod
    def zeros(cls, channels: int) -> "DfpWeights":
        half = channels // 2
        return cls(np.zeros((half, channels)), np.zeros(half), np.zeros(half), np.zeros(half))

    @classmethod
    def random(cls, channels: int, rng=None) -> "DfpWeights":
        rng = np.random.default_rng(rng)
        half = channels // 2
        return cls(
            rng.normal(size=(half, channels)),
            rng.normal(size=half),
            rng.uniform(0.5, 1.5, size=half),
            rng.normal(scale=0.1, size=half),
        )


def silu(x):
    return x / (1.0 + np.exp(-x))


def check_feature_map(f, name="feature map") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 3:
        raise ShapeMismatch(f"{name} must be (C, H, W), got shape {f.shape}")
    if f.shape[0] % 2:
        raise ShapeMismatch(f"{name} channel count must be even, got {f.shape[0]}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def conv1x1_bn_silu(f, w: DfpWeights) -> np.ndarray:
    """Per-pixel linear map to C/2 channels, batch-norm affine, then SiLU."""
    f = check_feature_map(f)
    if f.shape[0] != w.in_channels:
        raise ShapeMismatch(f"input has {f.shape[0]} channels, weights expect {w.in_channels}")
    y = np.einsum("oc,chw->ohw", w.conv, f) + w.bias[:, None, None]
    z = w.bn_scale[:, None, None] * y + w.bn_shift[:, None, None]
    return silu(z)


def dynamic_flow(p_t, p_tm1, w: DfpWeights) -> np.ndarray:
    return np.concatenate([conv1x1_bn_silu(p_t, w), conv1x1_bn_silu(p_tm1, w)], axis=0)


def dfp_fuse(p_t, p_tm1, w: DfpWeights) -> np.ndarray:
    """Fuse current and previous feature maps; output shape equals input shape."""
    p_t = check_feature_map(p_t, "p_t")
    p_tm1 = check_feature_map(p_tm1, "p_tm1")
    if p_t.shape != p_tm1.shape:
        raise ShapeMismatch(f"p_t {p_t.shape} and p_tm1 {p_tm1.shape} differ")
    return p_t + dynamic_flow(p_t, p_tm1, w)
