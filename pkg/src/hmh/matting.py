"""Alpha-matte algebra: compositing, foreground extraction, trimaps and
trimap-guided fusion of a raw matting prediction.

A trimap is a ``uint8`` array holding one of :data:`BG`, :data:`UNKNOWN`,
:data:`FG` per pixel. The values double as the on-disk PNG encoding.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .imgcore import ImageError, check_alpha, check_rgb, check_same_size

BG = 0
UNKNOWN = 128
FG = 255

DEFAULT_BAND_RADIUS = 10


def check_trimap(trimap, name="trimap") -> np.ndarray:
    trimap = np.asarray(trimap)
    if trimap.ndim != 2:
        raise ImageError(f"{name} must have shape (H, W), got {trimap.shape}")
    if not np.isin(trimap, (BG, UNKNOWN, FG)).all():
        raise ImageError(f"{name} may only contain {BG}, {UNKNOWN} and {FG}")
    return trimap.astype(np.uint8, copy=False)


def unknown_mask(trimap) -> np.ndarray:
    """The mask M: True where the trimap is UNKNOWN."""
    return check_trimap(trimap) == UNKNOWN


def composite(fg_source, alpha, background) -> np.ndarray:
    """Blend ``alpha * fg_source + (1 - alpha) * background`` channelwise."""
    fg_source = check_rgb(fg_source, "fg_source")
    alpha = check_alpha(alpha)
    background = check_rgb(background, "background")
    check_same_size(fg_source, alpha, background, names=("fg_source", "alpha", "background"))
    a = alpha[..., None]
    return a * fg_source + (1.0 - a) * background


def extract_foreground(img, alpha) -> np.ndarray:
    """Premultiplied foreground ``alpha * img``."""
    img = check_rgb(img)
    alpha = check_alpha(alpha)
    check_same_size(img, alpha, names=("image", "alpha"))
    return alpha[..., None] * img


def square_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a ``(2r+1) x (2r+1)`` square; pixels outside the
    image count as unset."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0 or not mask.any():
        return mask.copy()
    return ndimage.maximum_filter(mask, size=2 * radius + 1, mode="constant", cval=False)


def generate_trimap(alpha, band_radius: int = DEFAULT_BAND_RADIUS) -> np.ndarray:
    """Trimap from a matte: the fractional-alpha set grown by ``band_radius``
    becomes UNKNOWN, remaining opaque pixels FG and transparent pixels BG."""
    if band_radius < 0:
        raise ValueError(f"band_radius must be >= 0, got {band_radius}")
    alpha = check_alpha(alpha)
    unknown = square_dilate((alpha > 0.0) & (alpha < 1.0), band_radius)
    trimap = np.where(alpha >= 1.0, FG, BG).astype(np.uint8)
    trimap[unknown] = UNKNOWN
    return trimap


def fuse_prediction(raw_pred, trimap) -> np.ndarray:
    """Combine a raw prediction with the trimap: ``M * pred + (1 - M) * known``.

    Known regions take their trimap value (1 for FG, 0 for BG), so the result
    is idempotent under repeated fusion with the same trimap.
    """
    raw_pred = check_alpha(raw_pred, "raw_pred")
    trimap = check_trimap(trimap)
    check_same_size(raw_pred, trimap, names=("raw_pred", "trimap"))
    known = (trimap == FG).astype(np.float64)
    return np.where(trimap == UNKNOWN, raw_pred, known)
