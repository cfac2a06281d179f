"""Background perturbations used to build disharmonious composites.

Three kinds of adjustment are drawn per image: a Reinhard color transfer
towards another dataset image, a global illumination change, or a
saturation boost. Backgrounds themselves are recovered from the portrait by
fast-marching inpainting under the (dilated) matte.
"""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from .imgcore import (ImageError, channel_stats, check_alpha, check_rgb,
                      check_same_size, lalphabeta_to_rgb, rgb_to_lalphabeta)
from .matting import square_dilate

COLOR_TRANSFER = "color_transfer"
ILLUMINATION = "illumination"
COLOR_ENHANCE = "color_enhance"
KINDS = (COLOR_TRANSFER, ILLUMINATION, COLOR_ENHANCE)

# Factor ranges leave out a band around 1 so every draw is visibly off.
ILLUMINATION_RANGES = ((0.4, 0.75), (1.3, 1.8))
ENHANCE_RANGE = (1.4, 2.2)

LUMA = np.array([0.299, 0.587, 0.114])
SIGMA_FLOOR = 1e-6
DEFAULT_MASK_DILATION = 5
INPAINT_RADIUS = 3


@dataclass(frozen=True)
class AdjustmentSpec:
    """Which background transfer was applied, with enough detail to redo it."""

    kind: str
    seed: int
    target_id: Optional[str] = None
    factor: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown adjustment kind {self.kind!r}")
        if self.kind == COLOR_TRANSFER:
            if self.target_id is None or self.factor is not None:
                raise ValueError("color_transfer needs target_id and no factor")
        else:
            if self.target_id is not None:
                raise ValueError(f"{self.kind} takes no target_id")
            if self.factor is None or not self.factor > 0:
                raise ValueError(f"{self.kind} needs a positive factor")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "AdjustmentSpec":
        factor = d.get("factor")
        return cls(kind=d["kind"], seed=int(d["seed"]), target_id=d.get("target_id"),
                   factor=None if factor is None else float(factor))


def transfer_lalphabeta(source_lab: np.ndarray, target_lab: np.ndarray) -> np.ndarray:
    """Match per-channel mean and std of ``source_lab`` to ``target_lab``.

    Channels with (near) zero spread in the source are only shifted.
    """
    src = channel_stats(source_lab)
    tgt = channel_stats(target_lab)
    scale = np.where(src.std < SIGMA_FLOOR, 1.0, tgt.std / np.maximum(src.std, SIGMA_FLOOR))
    return (source_lab - src.mean) * scale + tgt.mean


def reinhard_transfer(source, target) -> np.ndarray:
    """Reinhard color transfer of ``source`` towards the colors of ``target``.

    Statistics are global, so the two images may differ in size.
    """
    out_lab = transfer_lalphabeta(rgb_to_lalphabeta(source), rgb_to_lalphabeta(target))
    return lalphabeta_to_rgb(out_lab)


def illumination_adjust(img, factor: float) -> np.ndarray:
    if not factor > 0:
        raise ValueError(f"illumination factor must be > 0, got {factor}")
    img = check_rgb(img)
    return np.clip(factor * img, 0.0, 1.0)


def color_enhance(img, factor: float) -> np.ndarray:
    """Scale saturation about each pixel's luma.

    ``factor`` 0 yields grayscale, 1 the input, larger values stronger color.
    """
    if not factor >= 0:
        raise ValueError(f"enhance factor must be >= 0, got {factor}")
    img = check_rgb(img)
    gray = (img @ LUMA)[..., None]
    return np.clip(gray + factor * (img - gray), 0.0, 1.0)


def image_rng(seed: int, image_id: str) -> np.random.Generator:
    """Per-image generator keyed on ``(seed, image_id)`` only, so results do
    not depend on processing order or worker count."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:16], "little")])
    return np.random.default_rng(ss)


def sample_adjustment(seed: int, image_id: str, target_pool: Sequence[str]) -> AdjustmentSpec:
    if not target_pool:
        raise ValueError("target_pool is empty")
    rng = image_rng(seed, image_id)
    kind = KINDS[int(rng.integers(len(KINDS)))]
    if kind == COLOR_TRANSFER:
        candidates = sorted(set(target_pool) - {image_id})
        if not candidates:
            raise ValueError(f"target_pool holds no image other than {image_id!r}")
        target = candidates[int(rng.integers(len(candidates)))]
        return AdjustmentSpec(kind, seed, target_id=target)
    if kind == ILLUMINATION:
        (a0, a1), (b0, b1) = ILLUMINATION_RANGES
        u = rng.uniform(0.0, (a1 - a0) + (b1 - b0))
        factor = a0 + u if u < a1 - a0 else b0 + (u - (a1 - a0))
        return AdjustmentSpec(kind, seed, factor=float(factor))
    lo, hi = ENHANCE_RANGE
    return AdjustmentSpec(kind, seed, factor=float(rng.uniform(lo, hi)))


def apply_adjustment(background, spec: AdjustmentSpec, target=None) -> np.ndarray:
    """Produce the perturbed background for ``spec``.

    ``target`` is the RGB image named by ``spec.target_id`` and is required
    for color transfer only.
    """
    if spec.kind == COLOR_TRANSFER:
        if target is None:
            raise ValueError("color_transfer requires the target image")
        return reinhard_transfer(background, target)
    if spec.kind == ILLUMINATION:
        return illumination_adjust(background, spec.factor)
    return color_enhance(background, spec.factor)


_KNOWN, _BAND, _INSIDE = 0, 1, 2


def _disk_offsets(radius):
    r = int(radius)
    return np.array([(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
                     if 0 < dy * dy + dx * dx <= radius * radius], dtype=np.int64)


@numba.njit(cache=True)
def _solve_eikonal(T, flags, y1, x1, y2, x2):
    h, w = T.shape
    inside1 = not (0 <= y1 < h and 0 <= x1 < w) or flags[y1, x1] == _INSIDE
    inside2 = not (0 <= y2 < h and 0 <= x2 < w) or flags[y2, x2] == _INSIDE
    if inside1 and inside2:
        return np.inf
    if inside1:
        return 1.0 + T[y2, x2]
    if inside2:
        return 1.0 + T[y1, x1]
    t1 = T[y1, x1]
    t2 = T[y2, x2]
    if abs(t1 - t2) >= 1.0:
        return 1.0 + min(t1, t2)
    return 0.5 * (t1 + t2 + np.sqrt(2.0 - (t1 - t2) ** 2))


@numba.njit(cache=True)
def _grad_component(T, flags, y, x, dy, dx):
    h, w = T.shape
    ya, xa, yb, xb = y + dy, x + dx, y - dy, x - dx
    fwd = 0 <= ya < h and 0 <= xa < w and flags[ya, xa] != _INSIDE
    bwd = 0 <= yb < h and 0 <= xb < w and flags[yb, xb] != _INSIDE
    if fwd and bwd:
        return 0.5 * (T[ya, xa] - T[yb, xb])
    if fwd:
        return T[ya, xa] - T[y, x]
    if bwd:
        return T[y, x] - T[yb, xb]
    return 0.0


@numba.njit(cache=True)
def _fmm_inpaint(img, mask, offsets):
    h, w, c = img.shape
    out = img.copy()
    flags = np.zeros((h, w), np.int8)
    T = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                flags[y, x] = _INSIDE
                T[y, x] = np.inf

    heap = [(0.0, np.int64(0))]
    heap.pop()
    for y in range(h):
        for x in range(w):
            if flags[y, x] != _KNOWN:
                continue
            if ((y > 0 and mask[y - 1, x]) or (y < h - 1 and mask[y + 1, x])
                    or (x > 0 and mask[y, x - 1]) or (x < w - 1 and mask[y, x + 1])):
                flags[y, x] = _BAND
                heapq.heappush(heap, (0.0, np.int64(y * w + x)))

    nbr = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])
    acc = np.zeros(c)
    lo = np.empty(c)
    hi = np.empty(c)
    while len(heap) > 0:
        _, idx = heapq.heappop(heap)
        py, px = idx // w, idx % w
        if flags[py, px] == _KNOWN:
            continue
        flags[py, px] = _KNOWN
        for k in range(4):
            y = py + nbr[k, 0]
            x = px + nbr[k, 1]
            if not (0 <= y < h and 0 <= x < w) or flags[y, x] != _INSIDE:
                continue
            t = min(min(_solve_eikonal(T, flags, y - 1, x, y, x - 1),
                        _solve_eikonal(T, flags, y + 1, x, y, x - 1)),
                    min(_solve_eikonal(T, flags, y - 1, x, y, x + 1),
                        _solve_eikonal(T, flags, y + 1, x, y, x + 1)))
            T[y, x] = t
            gy = _grad_component(T, flags, y, x, 1, 0)
            gx = _grad_component(T, flags, y, x, 0, 1)

            acc[:] = 0.0
            lo[:] = np.inf
            hi[:] = -np.inf
            wsum = 0.0
            for j in range(offsets.shape[0]):
                qy = y + offsets[j, 0]
                qx = x + offsets[j, 1]
                if not (0 <= qy < h and 0 <= qx < w) or flags[qy, qx] == _INSIDE:
                    continue
                ry = y - qy
                rx = x - qx
                dist2 = ry * ry + rx * rx
                direction = abs(ry * gy + rx * gx) / np.sqrt(dist2)
                if direction < 1e-6:
                    direction = 1e-6
                level = 1.0 / (1.0 + abs(T[qy, qx] - t))
                wq = direction * level / dist2
                wsum += wq
                for ch in range(c):
                    v = out[qy, qx, ch]
                    acc[ch] += wq * v
                    lo[ch] = min(lo[ch], v)
                    hi[ch] = max(hi[ch], v)
            # clamp away rounding so the fill stays a convex combination
            for ch in range(c):
                out[y, x, ch] = min(max(acc[ch] / wsum, lo[ch]), hi[ch])

            flags[y, x] = _BAND
            heapq.heappush(heap, (t, np.int64(y * w + x)))
    return out


def inpaint_mask(alpha, mask_dilation: int = DEFAULT_MASK_DILATION) -> np.ndarray:
    """Pixels to be filled: ``alpha > 0`` grown by ``mask_dilation``."""
    return square_dilate(check_alpha(alpha) > 0.0, mask_dilation)


def inpaint_background(img, alpha, mask_dilation: int = DEFAULT_MASK_DILATION) -> np.ndarray:
    """Recover the background behind a portrait.

    Every pixel under the dilated matte is filled by marching inward from the
    mask boundary in distance order, taking a distance, direction and level
    weighted mean of already known pixels within radius 3. Pixels outside
    the mask are returned untouched.
    """
    if mask_dilation < 0:
        raise ValueError(f"mask_dilation must be >= 0, got {mask_dilation}")
    img = check_rgb(img)
    alpha = check_alpha(alpha)
    check_same_size(img, alpha, names=("image", "alpha"))
    mask = inpaint_mask(alpha, mask_dilation)
    if mask.all():
        raise ImageError("fill mask covers the whole image; nothing to propagate from")
    if not mask.any():
        return img.copy()
    return _fmm_inpaint(np.ascontiguousarray(img), mask, _disk_offsets(INPAINT_RADIUS))
