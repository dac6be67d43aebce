"""
Sinogram completion inside the metal trace: linear interpolation (LI),
normalized MAR (NMAR) and the composite rule that blends a network output with
the LI sinogram.
"""
from typing import Optional

import numpy as np

from app import constants as C
from app.config import MARConfig
from app.errors import ShapeError, UnitError
from app.mar.segmentation import MetalTrace
from app.physics.materials import MetalMask
from app.tomo.geometry import FanBeamGeometry
from app.tomo.images import Image, Sinogram, hu_to_mu
from app.tomo.projector import get_projector


def interpolate_rows(values: np.ndarray, trace: np.ndarray) -> np.ndarray:
    '''
    Per-view 1-D linear interpolation across traced bins.

    Args:
        values (np.ndarray): views x bins array.
        trace (np.ndarray): Boolean mask of the same shape.
    Returns:
        np.ndarray: Copy of `values` with traced entries interpolated; other
        entries are copied bit-exactly.
    '''
    out = np.array(values, dtype=np.float64, copy=True)
    bins = np.arange(values.shape[1])
    for v in np.flatnonzero(trace.any(axis=1)):
        row_trace = trace[v]
        known = ~row_trace
        out[v, row_trace] = np.interp(bins[row_trace], bins[known], values[v, known])
    return out


def li_complete(s: Sinogram, tr: MetalTrace) -> Sinogram:
    '''
    Linear-interpolation completion of the metal trace.

    Args:
        s (Sinogram): Metal-corrupted sinogram.
        tr (MetalTrace): Metal trace.
    Returns:
        Sinogram: Values outside the trace unchanged.
    '''
    tr.check_geometry(s.geom)
    if tr.empty:
        return s.with_values(s.values.copy())
    tr.check_interior()
    return s.with_values(interpolate_rows(s.values, tr.mask))


def tissue_prior(x: Image, config: Optional[MARConfig] = None,
                 metal: Optional[MetalMask] = None) -> Image:
    '''
    Tissue-class prior in HU: air -> -1000, soft tissue -> 0, bone kept, metal -> 0.

    Args:
        x (Image): HU image (typically the uncorrected or LI image).
        config (Optional[MARConfig]): Thresholds.
        metal (Optional[MetalMask]): Metal pixels; thresholded from x when None.
    Returns:
        Image: HU prior.
    '''
    config = config or MARConfig()
    if x.unit != "HU":
        raise UnitError("tissue_prior expects an HU image")
    hu = x.values
    metal_pixels = metal.mask if metal is not None else hu >= config.metal_threshold_hu
    prior = np.where(hu < config.nmar_air_threshold_hu, -1000.0,
                     np.where(hu < config.nmar_bone_threshold_hu, 0.0, hu))
    prior = np.where(metal_pixels, 0.0, prior)
    return Image(prior, x.grid, "HU")


def normalized_complete(s: Sinogram, tr: MetalTrace, prior: np.ndarray,
                        epsilon: float = C.NMAR_EPSILON) -> Sinogram:
    '''
    Interpolate s / prior across the trace and multiply back.

    Args:
        s (Sinogram): Metal-corrupted sinogram.
        tr (MetalTrace): Metal trace.
        prior (np.ndarray): Prior sinogram values (views x bins).
        epsilon (float): Floor applied to the prior before division.
    Returns:
        Sinogram
    '''
    tr.check_geometry(s.geom)
    if np.shape(prior) != s.geom.shape:
        raise ShapeError("Prior sinogram shape does not match")
    if tr.empty:
        return s.with_values(s.values.copy())
    tr.check_interior()
    floor = np.maximum(prior, epsilon)
    ratio = interpolate_rows(s.values / floor, tr.mask)
    return s.with_values(np.where(tr.mask, ratio * floor, s.values))


def nmar_complete(s_ma: Sinogram, tr: MetalTrace, x_ma: Image, geom: FanBeamGeometry,
                  config: Optional[MARConfig] = None, metal: Optional[MetalMask] = None) -> Sinogram:
    '''
    Normalized MAR: the tissue prior of x_ma is forward projected and used to
    normalize the sinogram before linear interpolation.

    Args:
        s_ma (Sinogram): Metal-corrupted sinogram.
        tr (MetalTrace): Metal trace.
        x_ma (Image): Uncorrected HU reconstruction.
        geom (FanBeamGeometry): Acquisition geometry.
        config (Optional[MARConfig]): Thresholds and epsilon.
        metal (Optional[MetalMask]): Known metal pixels, if any.
    Returns:
        Sinogram
    '''
    config = config or MARConfig()
    prior = tissue_prior(x_ma, config, metal)
    prior_sino = get_projector(geom).project(hu_to_mu(prior.values))
    return normalized_complete(s_ma, tr, prior_sino, config.epsilon)


def composite(s_net: Sinogram, s_li: Sinogram, tr: MetalTrace) -> Sinogram:
    '''
    Network values inside the trace, LI values outside.
    '''
    if s_net.values.shape != s_li.values.shape:
        raise ShapeError("composite inputs differ in shape")
    tr.check_geometry(s_li.geom)
    return s_li.with_values(np.where(tr.mask, s_net.values, s_li.values))
