"""
PNG figures: windowed HU images side by side with their difference images.
"""
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from PIL import Image as PILImage, ImageDraw

from app import constants as C

LABEL_HEIGHT = 12


def window(values: np.ndarray, bounds: Tuple[float, float]) -> np.ndarray:
    '''
    Map HU values to uint8 grey levels with the display window [low, high].
    '''
    low, high = bounds
    scaled = (np.asarray(values, dtype=np.float64) - low) / (high - low)
    return (np.clip(scaled, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(values: np.ndarray, path: Path, bounds: Tuple[float, float] = C.DISPLAY_WINDOWS["body"]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(window(values, bounds), mode="L").save(path)
    return path


def _tile(values: np.ndarray, bounds, label: str, scale: int) -> PILImage.Image:
    img = PILImage.fromarray(window(values, bounds), mode="L")
    img = img.resize((img.width * scale, img.height * scale), PILImage.NEAREST)
    tile = PILImage.new("L", (img.width, img.height + LABEL_HEIGHT), 0)
    tile.paste(img, (0, LABEL_HEIGHT))
    ImageDraw.Draw(tile).text((2, 0), label, fill=255)
    return tile


def comparison_panel(reference: np.ndarray, images: Dict[str, np.ndarray], path: Path,
                     bounds: Tuple[float, float] = C.DISPLAY_WINDOWS["body"],
                     diff_bounds: Tuple[float, float] = C.DISPLAY_WINDOWS["difference"],
                     scale: Optional[int] = None) -> Path:
    '''
    Two-row panel: the reference and each method's image on top, each method
    minus the reference below.

    Args:
        reference (np.ndarray): Ground-truth HU image.
        images (Dict[str, np.ndarray]): Method name -> HU image.
        path (Path): Output PNG.
        bounds (Tuple[float, float]): Display window for images.
        diff_bounds (Tuple[float, float]): Display window for differences.
        scale (Optional[int]): Integer upscaling; chosen so tiles are ~256 px when None.
    Returns:
        Path
    '''
    scale = scale or max(1, 256 // reference.shape[0])
    top = [_tile(reference, bounds, "reference", scale)]
    bottom = [_tile(np.zeros_like(reference), diff_bounds, "", scale)]
    for name, values in images.items():
        top.append(_tile(values, bounds, name, scale))
        bottom.append(_tile(values - reference, diff_bounds, f"{name} - ref", scale))
    w, h = top[0].size
    canvas = PILImage.new("L", (w * len(top), 2 * h), 0)
    for i, (a, b) in enumerate(zip(top, bottom)):
        canvas.paste(a, (i * w, 0))
        canvas.paste(b, (i * w, h))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path)
    return path
