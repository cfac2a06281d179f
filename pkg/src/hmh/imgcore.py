"""Image carriers, lαβ color conversion, bilinear resampling and 8-bit PNG I/O.

Images are plain numpy arrays:

* RGB image: ``float64`` array of shape ``(H, W, 3)`` with values in [0, 1].
* alpha matte: ``float64`` array of shape ``(H, W)`` with values in [0, 1].
* lαβ image: ``float64`` array of shape ``(H, W, 3)``, unbounded.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# Reinhard et al. (2001) RGB -> LMS.
RGB2LMS = np.array([
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
])
# Exact inverse rather than the rounded published LMS -> RGB table, so the
# round trip is an identity to float precision.
LMS2RGB = np.linalg.inv(RGB2LMS)

LOG_LMS2LAB = np.diag([1 / np.sqrt(3), 1 / np.sqrt(6), 1 / np.sqrt(2)]) @ np.array([
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -2.0],
    [1.0, -1.0, 0.0],
])
LAB2LOG_LMS = np.linalg.inv(LOG_LMS2LAB)

LMS_FLOOR = 1e-4


class ImageError(ValueError):
    """Raised for malformed image arrays or incompatible shapes."""


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray


def channel_stats(img: np.ndarray) -> ChannelStats:
    flat = np.asarray(img, dtype=np.float64).reshape(-1, img.shape[-1])
    return ChannelStats(mean=flat.mean(axis=0), std=flat.std(axis=0))


def check_rgb(img, name="image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ImageError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ImageError(f"{name} values must lie in [0, 1]")
    return img


def check_alpha(alpha, name="alpha") -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[0] < 1 or alpha.shape[1] < 1:
        raise ImageError(f"{name} must have shape (H, W), got {alpha.shape}")
    if not np.all(np.isfinite(alpha)):
        raise ImageError(f"{name} contains non-finite values")
    if alpha.min() < 0.0 or alpha.max() > 1.0:
        raise ImageError(f"{name} values must lie in [0, 1]")
    return alpha


def check_same_size(*arrays, names=None):
    sizes = {a.shape[:2] for a in arrays}
    if len(sizes) != 1:
        shapes = ", ".join(str(a.shape[:2]) for a in arrays)
        label = f" ({', '.join(names)})" if names else ""
        raise ImageError(f"dimension mismatch{label}: {shapes}")


def rgb_to_lalphabeta(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image to Ruderman's lαβ space.

    LMS responses are floored at ``LMS_FLOOR`` before the base-10 logarithm,
    so black pixels map to finite values.
    """
    img = check_rgb(img)
    lms = img @ RGB2LMS.T
    log_lms = np.log10(np.maximum(lms, LMS_FLOOR))
    return log_lms @ LOG_LMS2LAB.T


def lalphabeta_to_rgb(lab: np.ndarray, clip: bool = True) -> np.ndarray:
    """Inverse of :func:`rgb_to_lalphabeta`; the result is clipped to [0, 1]
    unless ``clip`` is false."""
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[2] != 3:
        raise ImageError(f"lαβ image must have shape (H, W, 3), got {lab.shape}")
    lms = 10.0 ** (lab @ LAB2LOG_LMS.T)
    rgb = lms @ LMS2RGB.T
    return np.clip(rgb, 0.0, 1.0) if clip else rgb


def _axis_weights(n_in, n_out):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    i0 = np.floor(x).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, x - i0


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize of an RGB image or alpha matte.

    Works for both ``(H, W)`` and ``(H, W, C)`` arrays. Output never leaves
    the input's value range.
    """
    if out_w < 1 or out_h < 1:
        raise ImageError(f"target size must be positive, got {out_w}x{out_h}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()

    y0, y1, wy = _axis_weights(h, out_h)
    x0, x1, wx = _axis_weights(w, out_w)
    if img.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]

    rows0 = img[y0]
    rows1 = img[y1]
    # lerp form keeps constant regions bit-exact
    top = rows0[:, x0] + wx * (rows0[:, x1] - rows0[:, x0])
    bottom = rows1[:, x0] + wx * (rows1[:, x1] - rows1[:, x0])
    out = top + wy * (bottom - top)
    return np.clip(out, img.min(), img.max())


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to 8 bit, rounding half away from zero."""
    arr = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64) / 255.0


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def read_alpha(path) -> np.ndarray:
    """Read a single-channel matte.

    RGBA / LA files contribute their alpha channel (the layout of the
    Kaggle portrait-matting corpus); anything else is converted to grayscale.
    """
    with Image.open(path) as im:
        if im.mode in ("RGBA", "LA", "PA"):
            data = np.asarray(im.getchannel("A"))
        else:
            data = np.asarray(im.convert("L"))
    return from_uint8(data)


def write_rgb(path, img: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def write_gray(path, data: np.ndarray) -> None:
    """Write a single-channel PNG. Float arrays are quantized, uint8 written as is."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    data = np.asarray(data)
    if data.dtype != np.uint8:
        data = to_uint8(data)
    Image.fromarray(data).save(path, format="PNG")
