from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.morphology import disk

from app import constants as C
from app.errors import ShapeError, TraceBoundaryError, UnitError
from app.physics.materials import MetalMask
from app.tomo.geometry import FanBeamGeometry
from app.tomo.images import Image
from app.tomo.projector import get_projector


@dataclass
class MetalTrace:
    '''
    Sinogram-domain mask of projections passing through metal (views x bins).
    '''
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if self.mask.ndim != 2:
            raise ShapeError("Metal trace must be 2-D")

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    def check_geometry(self, geom: FanBeamGeometry) -> None:
        if self.mask.shape != geom.shape:
            raise ShapeError(f"Trace shape {self.mask.shape} does not match sinogram {geom.shape}")

    def check_interior(self) -> None:
        '''
        Every run must have unaffected bins on both sides within its view.
        '''
        if self.mask[:, 0].any() or self.mask[:, -1].any():
            raise TraceBoundaryError("Metal trace touches the detector boundary")


def segment_metal(x: Image, threshold: float = C.METAL_THRESHOLD_HU) -> MetalMask:
    '''
    Metal mask by thresholding an HU image.

    Args:
        x (Image): HU image.
        threshold (float): Pixels at or above this HU value are metal.
    Returns:
        MetalMask
    '''
    if x.unit != "HU":
        raise UnitError("segment_metal expects an HU image")
    return MetalMask(x.values >= threshold)


def metal_trace(m: MetalMask, geom: FanBeamGeometry) -> MetalTrace:
    '''
    Rays whose forward projection of the binary mask is positive.

    Args:
        m (MetalMask): Metal mask on geom's grid.
        geom (FanBeamGeometry): Acquisition geometry.
    Returns:
        MetalTrace
    '''
    m.check_grid(geom.grid)
    if m.empty:
        return MetalTrace(np.zeros(geom.shape, dtype=bool))
    projection = get_projector(geom).project(m.mask.astype(np.float64))
    return MetalTrace(projection > 0)


def dilate_mask(m: MetalMask, radius: int) -> MetalMask:
    """Morphological dilation with a disk of `radius` pixels."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return MetalMask(m.mask.copy())
    return MetalMask(ndimage.binary_dilation(m.mask, structure=disk(radius)))


def erode_mask(m: MetalMask, radius: int) -> MetalMask:
    """Morphological erosion with a disk of `radius` pixels; may return an empty mask."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return MetalMask(m.mask.copy())
    return MetalMask(ndimage.binary_erosion(m.mask, structure=disk(radius)))


def adjust_mask(m: MetalMask, radius: int) -> MetalMask:
    """Signed morphology: positive radius dilates, negative erodes."""
    return dilate_mask(m, radius) if radius >= 0 else erode_mask(m, -radius)
