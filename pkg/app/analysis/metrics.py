from typing import Optional, Tuple

import numpy as np
from skimage.metrics import structural_similarity

from app import constants as C
from app.errors import ShapeError


def _check(x: np.ndarray, ref: np.ndarray) -> None:
    if np.shape(x) != np.shape(ref):
        raise ShapeError(f"Metric inputs differ in shape: {np.shape(x)} vs {np.shape(ref)}")


def rmse_hu(x: np.ndarray, ref: np.ndarray, metal: Optional[np.ndarray] = None) -> float:
    '''
    Root-mean-square error in HU over non-metal pixels.

    Args:
        x (np.ndarray): HU image under test.
        ref (np.ndarray): HU reference.
        metal (Optional[np.ndarray]): Pixels excluded from the error.
    Returns:
        float
    '''
    _check(x, ref)
    keep = np.ones(np.shape(x), dtype=bool) if metal is None else ~np.asarray(metal, dtype=bool)
    if not keep.any():
        raise ShapeError("RMSE over an empty region")
    diff = np.asarray(x, dtype=np.float64)[keep] - np.asarray(ref, dtype=np.float64)[keep]
    return float(np.sqrt(np.mean(diff * diff)))


def ssim_window(shape: Tuple[int, ...]) -> int:
    """11, or the largest odd size that fits an image smaller than that."""
    side = min(shape)
    if side < 3:
        raise ShapeError(f"Image {shape} is too small for SSIM")
    return min(C.SSIM_WINDOW, side if side % 2 else side - 1)


def ssim(x: np.ndarray, ref: np.ndarray, metal: Optional[np.ndarray] = None) -> float:
    '''
    SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03 and a
    fixed 4095 HU dynamic range. Metal pixels take the reference value so they
    do not contribute. Images narrower than the window use `ssim_window`.
    '''
    _check(x, ref)
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if metal is not None:
        x = np.where(metal, ref, x)
    return float(structural_similarity(
        x, ref,
        data_range=C.SSIM_DATA_RANGE,
        win_size=ssim_window(x.shape),
        gaussian_weights=True,
        sigma=C.SSIM_SIGMA,
        use_sample_covariance=False,
        K1=C.SSIM_K1,
        K2=C.SSIM_K2,
    ))


def roi_box(metal: np.ndarray, min_side: int = 11) -> Tuple[slice, slice]:
    '''
    Square of side n/4 (at least `min_side`, at most the image) centred on the
    metal centroid and shifted to stay inside the image.
    '''
    h, w = metal.shape
    side = min(max(min(h, w) // 4, min_side), h, w)
    rows, cols = np.nonzero(metal)
    cy, cx = (rows.mean(), cols.mean()) if rows.size else ((h - 1) / 2.0, (w - 1) / 2.0)
    top = int(np.clip(round(cy - side / 2.0), 0, h - side))
    left = int(np.clip(round(cx - side / 2.0), 0, w - side))
    return slice(top, top + side), slice(left, left + side)


def roi_metrics(x: np.ndarray, ref: np.ndarray, metal: np.ndarray) -> Tuple[float, float]:
    """(RMSE, SSIM) inside the ROI around the metal."""
    box = roi_box(np.asarray(metal, dtype=bool))
    m = np.asarray(metal, dtype=bool)[box]
    if m.all():
        return float("nan"), float("nan")
    return rmse_hu(x[box], ref[box], m), ssim(x[box], ref[box], m)
