"""
Inference: segment metal, trace it, complete the sinogram with the trained
networks and reconstruct by FBP.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.config import MARConfig
from app.errors import DataError
from app.mar.completion import li_complete
from app.mar.segmentation import MetalTrace, metal_trace, segment_metal
from app.nn.tensor import no_grad
from app.physics.materials import MetalMask
from app.pipeline.framework import Batch, MARModel, prepare_case
from app.tomo.images import Image, Sinogram
from app.tomo.projector import fbp, forward_project

logger = logging.getLogger(__name__)


@dataclass
class InferenceResult:
    '''
    MAR output and the intermediates used to produce it. Images are in HU.
    '''
    x_out: Image
    x_ma: Image
    x_li: Image
    s_li: Sinogram
    s_corr: Sinogram
    trace: MetalTrace
    mask: MetalMask
    x_prior: Optional[Image] = None
    s_prior: Optional[Sinogram] = None
    corrected: bool = True


def infer_sinogram(model: MARModel, s_ma: Sinogram, mask: Optional[MetalMask] = None,
                   config: Optional[MARConfig] = None, x_ma: Optional[Image] = None) -> InferenceResult:
    '''
    Correct a metal-corrupted sinogram.

    Args:
        model (MARModel): Trained model for s_ma's geometry.
        s_ma (Sinogram): Metal-corrupted sinogram.
        mask (Optional[MetalMask]): Metal mask; thresholded from fbp(s_ma) when None.
        config (Optional[MARConfig]): Segmentation threshold.
        x_ma (Optional[Image]): Uncorrected HU image, reconstructed when None.
    Returns:
        InferenceResult: With `corrected=False` and x_out = fbp(s_ma) when no metal is found.
    '''
    config = config or MARConfig()
    if s_ma.geom != model.geom:
        raise DataError("Sinogram geometry does not match the model")
    geom = s_ma.geom
    if x_ma is None:
        x_ma = fbp(s_ma, geom).to_hu()
    if mask is None:
        mask = segment_metal(x_ma, config.metal_threshold_hu)
    trace = metal_trace(mask, geom)
    if trace.empty:
        logger.info("No metal found; nothing to correct")
        return InferenceResult(x_ma, x_ma, x_ma, s_ma, s_ma, trace, mask, corrected=False)
    trace.check_interior()

    case = prepare_case("infer", s_ma, trace, mask, x_ma=x_ma.values)
    with no_grad():
        out = model.forward(Batch.from_cases([case]))
    s_corr = Sinogram(out.s_corr.values[0, 0], geom)
    x_prior = s_prior = None
    if out.x_prior is not None:
        x_prior = Image(out.x_prior.values[0, 0], geom.grid, "HU")
        s_prior = Sinogram(out.s_prior.values[0, 0], geom)
    return InferenceResult(
        x_out=fbp(s_corr, geom).to_hu(),
        x_ma=x_ma,
        x_li=Image(case.x_li, geom.grid, "HU"),
        s_li=Sinogram(case.s_li, geom),
        s_corr=s_corr,
        trace=trace,
        mask=mask,
        x_prior=x_prior,
        s_prior=s_prior,
    )


def infer_image(model: MARModel, x: Image, config: Optional[MARConfig] = None) -> InferenceResult:
    '''
    Correct an image-only input: it is forward projected with the model's
    geometry first and the metal is segmented on the input itself.
    '''
    if x.grid != model.geom.grid:
        raise DataError("Image grid does not match the model geometry")
    config = config or MARConfig()
    mask = segment_metal(x.to_hu(), config.metal_threshold_hu)
    s_ma = forward_project(x.to_mu(), model.geom)
    return infer_sinogram(model, s_ma, mask=mask, config=config)


def li_image(s_ma: Sinogram, trace: MetalTrace) -> Image:
    """LI baseline image in HU."""
    return fbp(li_complete(s_ma, trace), s_ma.geom).to_hu()


def outside_trace_unchanged(result: InferenceResult) -> bool:
    '''S_corr equals S_LI at every bin outside the trace.'''
    keep = ~result.trace.mask
    return bool(np.array_equal(result.s_corr.values[keep], result.s_li.values[keep]))
