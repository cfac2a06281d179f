"""Dataset synthesis, evaluation metrics and loss oracles for joint portrait
matting and image harmonization."""

from .adjust import (AdjustmentSpec, color_enhance, illumination_adjust, inpaint_background,
                     reinhard_transfer, sample_adjustment)
from .imgcore import ChannelStats, lalphabeta_to_rgb, resize_bilinear, rgb_to_lalphabeta
from .losses import (LossBundle, ScoreBatch, discriminator_loss, generator_adv_losses,
                     harmony_recon_loss, matting_recon_loss, total_losses)
from .matting import BG, FG, UNKNOWN, composite, extract_foreground, fuse_prediction, generate_trimap
from .metrics import MattingScore, MosSummary, conn_error, grad_error, mos_aggregate, mse_alpha, sad_alpha

__version__ = "0.1.0"
