"""Loss terms of the joint matting / harmonization GAN as plain functions.

Nothing here trains anything; the functions exist so that a training loop
written elsewhere can be checked against them. Expectations are batch means,
reconstruction terms are mean absolute errors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import ImageError

# Weights used for the reported joint-training run.
DEFAULT_LAMBDA1 = 0.02
DEFAULT_LAMBDA2 = 0.01


@dataclass(frozen=True)
class ScoreBatch:
    """Discriminator outputs for one batch: real I, harmonized I_h,
    composite I_c and disharmonious I_d."""

    d_real: np.ndarray
    d_harmonized: np.ndarray
    d_composite: np.ndarray
    d_disharmonious: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in ("d_real", "d_harmonized", "d_composite", "d_disharmonious"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite scores")
            object.__setattr__(self, name, arr)
            arrays.append(arr)
        if len({a.size for a in arrays}) != 1 or arrays[0].size == 0:
            raise ValueError("score lists must be non-empty and of equal length")

    def __len__(self):
        return self.d_real.size


@dataclass(frozen=True)
class LossBundle:
    matting_recon: float
    harmony_recon: float
    disc: float
    gen_matting_adv: float
    gen_harmony_adv: float
    total_matting: float
    total_harmony: float
    lambda1: float
    lambda2: float


def _mean_abs(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ImageError(f"dimension mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.abs(pred - gt)))


def matting_recon_loss(pred, gt) -> float:
    """L1 distance between the fused predicted matte and the ground truth."""
    return _mean_abs(pred, gt)


def harmony_recon_loss(pred, gt) -> float:
    """L1 distance between the harmonized image and the real image, averaged
    over pixels and channels."""
    return _mean_abs(pred, gt)


def discriminator_loss(scores: ScoreBatch) -> float:
    """``mean(D(I_h) + D(I_c) + D(I_d) - D(I))``, minimized by the critic."""
    s = scores
    return float(np.mean(s.d_harmonized + s.d_composite + s.d_disharmonious - s.d_real))


def generator_adv_losses(scores: ScoreBatch) -> tuple[float, float]:
    """Adversarial terms for the matting and harmonization generators."""
    s = scores
    return float(np.mean(s.d_real - s.d_composite)), float(np.mean(s.d_real - s.d_harmonized))


def total_losses(matting_recon: float, harmony_recon: float, adv, lambda1: float = DEFAULT_LAMBDA1,
                 lambda2: float = DEFAULT_LAMBDA2, disc: float = float("nan")) -> LossBundle:
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError(f"loss weights must be >= 0, got {lambda1}, {lambda2}")
    adv_m, adv_h = adv
    return LossBundle(
        matting_recon=float(matting_recon),
        harmony_recon=float(harmony_recon),
        disc=float(disc),
        gen_matting_adv=float(adv_m),
        gen_harmony_adv=float(adv_h),
        total_matting=float(matting_recon + lambda1 * adv_m),
        total_harmony=float(harmony_recon + lambda2 * adv_h),
        lambda1=float(lambda1),
        lambda2=float(lambda2),
    )


def loss_bundle(scores: ScoreBatch, alpha_pred, alpha_gt, image_pred, image_gt,
                lambda1: float = DEFAULT_LAMBDA1, lambda2: float = DEFAULT_LAMBDA2) -> LossBundle:
    """Every loss term for one batch in a single record."""
    return total_losses(
        matting_recon_loss(alpha_pred, alpha_gt),
        harmony_recon_loss(image_pred, image_gt),
        generator_adv_losses(scores),
        lambda1,
        lambda2,
        disc=discriminator_loss(scores),
    )
