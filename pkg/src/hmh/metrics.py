"""Matting error metrics over the trimap's unknown region, and MOS aggregation.

SAD, Grad and Conn are reported divided by 1000, the usual benchmark scale.
MSE is the plain mean over unknown pixels with alphas in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

from .imgcore import check_alpha, check_same_size
from .matting import UNKNOWN, check_trimap

GRAD_SIGMA = 1.4
GRAD_TRUNCATE = 4.0
CONN_STEP = 0.1
CONN_THETA = 0.15


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MattingScore:
    mse: float
    sad: float
    grad: float
    conn: float
    unknown_pixel_count: int


@dataclass(frozen=True)
class MosSummary:
    mean: float
    stddev: float
    rater_count: int
    score_count: int


def _unknown_region(pred, gt, trimap):
    pred = check_alpha(pred, "pred")
    gt = check_alpha(gt, "gt")
    trimap = check_trimap(trimap)
    check_same_size(pred, gt, trimap, names=("pred", "gt", "trimap"))
    region = trimap == UNKNOWN
    if not region.any():
        raise MetricError("trimap has no unknown pixels")
    return pred, gt, region


def mse_alpha(pred, gt, trimap) -> float:
    pred, gt, region = _unknown_region(pred, gt, trimap)
    return float(np.mean((pred[region] - gt[region]) ** 2))


def sad_alpha(pred, gt, trimap) -> float:
    pred, gt, region = _unknown_region(pred, gt, trimap)
    return float(np.sum(np.abs(pred[region] - gt[region])) / 1000.0)


def gaussian_derivative_kernels(sigma: float = GRAD_SIGMA, truncate: float = GRAD_TRUNCATE):
    """1-D Gaussian ``g`` (unit sum) and its first derivative ``-x/σ² g``."""
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return g, -x / sigma ** 2 * g


def _correlate1d(img, kernel, axis):
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    # "symmetric" repeats the edge sample: d c b a | a b c d
    padded = np.pad(img, pad, mode="symmetric")
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(kernel), axis=axis)
    return windows @ kernel


def gradient_magnitude(alpha, sigma: float = GRAD_SIGMA, truncate: float = GRAD_TRUNCATE) -> np.ndarray:
    """|∇alpha| from separable first-order Gaussian derivative filters with
    reflective borders."""
    g, dg = gaussian_derivative_kernels(sigma, truncate)
    gx = _correlate1d(_correlate1d(alpha, g, 0), dg, 1)
    gy = _correlate1d(_correlate1d(alpha, dg, 0), g, 1)
    return np.hypot(gx, gy)


def grad_error(pred, gt, trimap, sigma: float = GRAD_SIGMA) -> float:
    pred, gt, region = _unknown_region(pred, gt, trimap)
    diff = gradient_magnitude(pred, sigma) - gradient_magnitude(gt, sigma)
    return float(np.sum(diff[region] ** 2) / 1000.0)


def largest_component(binary: np.ndarray) -> np.ndarray:
    """Largest 4-connected component; ties go to the one found first in
    raster order. Empty input gives an empty mask."""
    labels, n = ndimage.label(binary)
    if n == 0:
        return np.zeros_like(binary, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == int(np.argmax(sizes)) + 1


def connectivity_levels(pred, gt, step: float = CONN_STEP) -> np.ndarray:
    """Per pixel, the last threshold before it drops out of the largest
    component shared by both binarized mattes (1 if it never does)."""
    n = int(math.floor(1.0 / step + 1e-9))
    thresholds = np.arange(n + 1) * step
    level = np.full(pred.shape, -1.0)
    for i in range(1, n + 1):
        omega = largest_component((pred >= thresholds[i]) & (gt >= thresholds[i]))
        level[(level == -1.0) & ~omega] = thresholds[i - 1]
    level[level == -1.0] = 1.0
    return level


def conn_error(pred, gt, trimap, step: float = CONN_STEP, theta: float = CONN_THETA) -> float:
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    if not 0 < theta < 1:
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    pred, gt, region = _unknown_region(pred, gt, trimap)
    level = connectivity_levels(pred, gt, step)
    d_pred = pred - level
    d_gt = gt - level
    phi_pred = 1.0 - d_pred * (d_pred >= theta)
    phi_gt = 1.0 - d_gt * (d_gt >= theta)
    return float(np.sum(np.abs(phi_pred - phi_gt)[region]) / 1000.0)


def evaluate_matting(pred, gt, trimap, sigma=GRAD_SIGMA, step=CONN_STEP, theta=CONN_THETA) -> MattingScore:
    _, _, region = _unknown_region(pred, gt, trimap)
    return MattingScore(
        mse=mse_alpha(pred, gt, trimap),
        sad=sad_alpha(pred, gt, trimap),
        grad=grad_error(pred, gt, trimap, sigma),
        conn=conn_error(pred, gt, trimap, step, theta),
        unknown_pixel_count=int(region.sum()),
    )


def _check_score(score):
    if isinstance(score, bool) or not float(score).is_integer() or not 1 <= score <= 5:
        raise MetricError(f"scores must be integers in 1..5, got {score!r}")
    return int(score)


def mos_summary(scores: Iterable, rater_ids: Iterable = ()) -> MosSummary:
    """Mean and population standard deviation of 1-5 opinion scores."""
    values = np.array([_check_score(s) for s in scores], dtype=np.float64)
    if values.size == 0:
        raise MetricError("no scores given")
    raters = set(rater_ids)
    return MosSummary(mean=float(values.mean()), stddev=float(values.std()),
                      rater_count=len(raters), score_count=int(values.size))


def mos_aggregate(rows: Iterable) -> dict[str, MosSummary]:
    """Group ``(image_id, rater_id, method, score)`` rows by method."""
    by_method: dict[str, list] = {}
    for image_id, rater_id, method, score in rows:
        by_method.setdefault(method, []).append((rater_id, score))
    if not by_method:
        raise MetricError("no scores given")
    return {m: mos_summary([s for _, s in v], [r for r, _ in v]) for m, v in sorted(by_method.items())}
