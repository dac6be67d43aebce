"""
L1 training objectives. Image losses are expressed in HU scaled by `hu_scale`
(HU / 1000 by default) so that image and sinogram terms have comparable size.
"""
from typing import Optional

import numpy as np

from app import constants as C
from app.errors import EmptyMaskError
from app.nn.layers import mean_abs
from app.nn.tensor import Tensor, as_tensor

DEFAULT_HU_SCALE = 1e-3


def loss_prior(x_prior: Tensor, x_gt, hu_scale: float = DEFAULT_HU_SCALE) -> Tensor:
    '''
    Mean absolute difference between the prior image and ground truth (HU inputs).
    '''
    return mean_abs((x_prior - as_tensor(x_gt)) * hu_scale)


def loss_sino(s_corr: Tensor, s_corr_prime: Tensor, s_gt, beta: float = C.SINO_BETA) -> Tensor:
    '''
    ||S_gt - S_corr||_1 + beta * ||S_gt - S'_corr||_1, both as means.
    '''
    s_gt = as_tensor(s_gt)
    return mean_abs(s_gt - s_corr) + beta * mean_abs(s_gt - s_corr_prime)


def loss_fbp(x_recon_hu: Tensor, x_gt, metal: np.ndarray, hu_scale: float = DEFAULT_HU_SCALE) -> Tensor:
    '''
    Mean absolute image error over non-metal pixels.

    Args:
        x_recon_hu (Tensor): FBP of the corrected sinogram, in HU.
        x_gt: Ground-truth HU image(s).
        metal (np.ndarray): Metal mask broadcastable to the images.
        hu_scale (float): Unit applied to the HU difference.
    Returns:
        Tensor: Scalar loss.
    '''
    keep = ~np.broadcast_to(np.asarray(metal, dtype=bool), x_recon_hu.shape)
    if not keep.any():
        raise EmptyMaskError("loss_fbp: every pixel is metal")
    return mean_abs((x_recon_hu - as_tensor(x_gt)) * hu_scale, weight=keep)


def loss_total(l_prior: Optional[Tensor], l_sino: Tensor, l_fbp: Tensor,
               alpha1: float = C.ALPHA_SINO, alpha2: float = C.ALPHA_FBP) -> Tensor:
    '''
    L_prior + alpha1 * L_sino + alpha2 * L_FBP; `l_prior` is None for variants
    without a PriorNet.
    '''
    total = alpha1 * l_sino + alpha2 * l_fbp
    return total if l_prior is None else l_prior + total
