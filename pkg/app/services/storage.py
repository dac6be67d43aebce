"""
Raw + JSON sidecar persistence: `<name>.raw` holds little-endian float32
row-major values, `<name>.json` describes shape, unit and geometry.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from app.errors import DataError
from app.mar.segmentation import MetalTrace
from app.physics.materials import MetalMask
from app.physics.simulator import CasePair
from app.tomo.geometry import FanBeamGeometry, ImageGrid
from app.tomo.images import Image, Sinogram

logger = logging.getLogger(__name__)

RAW_DTYPE = "<f4"
CASE_ARRAYS = ("S_ma", "S_gt", "X_gt", "X_ma", "M", "Tr")


def write_json(path: Path, doc: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


def read_json(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise DataError(f"Missing file: {path}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"Malformed JSON in {path}: {e}") from e


def save_array(directory: Path, name: str, values: np.ndarray, kind: str, unit: str,
               geom: Optional[FanBeamGeometry] = None, grid: Optional[ImageGrid] = None) -> Path:
    '''
    Write one array and its sidecar.

    Args:
        directory (Path): Target directory (created if needed).
        name (str): Base file name.
        values (np.ndarray): Array to store.
        kind (str): "image", "sinogram" or "mask".
        unit (str): "HU", "mu", "line_integral" or "mask".
        geom (Optional[FanBeamGeometry]): Acquisition geometry, for sinograms.
        grid (Optional[ImageGrid]): Image grid, for images and image masks.
    Returns:
        Path: The `.raw` file.
    '''
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = directory / f"{name}.raw"
    raw.write_bytes(np.ascontiguousarray(values, dtype=RAW_DTYPE).tobytes())
    write_json(directory / f"{name}.json", {
        "name": name,
        "kind": kind,
        "shape": list(np.shape(values)),
        "unit": unit,
        "dtype": "float32-le",
        "geometry": None if geom is None else geom.to_dict(),
        "grid": None if grid is None else grid.to_dict(),
    })
    return raw


def load_array(directory: Path, name: str) -> Tuple[np.ndarray, Dict[str, Any]]:
    directory = Path(directory)
    meta = read_json(directory / f"{name}.json")
    raw = directory / f"{name}.raw"
    try:
        values = np.fromfile(raw, dtype=RAW_DTYPE)
    except FileNotFoundError as e:
        raise DataError(f"Missing file: {raw}") from e
    shape = tuple(meta["shape"])
    if values.size != int(np.prod(shape)):
        raise DataError(f"{raw} holds {values.size} values, sidecar declares {shape}")
    return values.astype(np.float64).reshape(shape), meta


def save_image(directory: Path, name: str, image: Image) -> Path:
    return save_array(directory, name, image.values, "image", image.unit, grid=image.grid)


def load_image(directory: Path, name: str) -> Image:
    values, meta = load_array(directory, name)
    if meta["kind"] != "image" or meta["grid"] is None:
        raise DataError(f"{name} is not an image")
    return Image(values, ImageGrid.from_dict(meta["grid"]), meta["unit"])


def save_sinogram(directory: Path, name: str, sino: Sinogram) -> Path:
    return save_array(directory, name, sino.values, "sinogram", "line_integral", geom=sino.geom)


def load_sinogram(directory: Path, name: str) -> Sinogram:
    values, meta = load_array(directory, name)
    if meta["kind"] != "sinogram" or meta["geometry"] is None:
        raise DataError(f"{name} is not a sinogram")
    return Sinogram(values, FanBeamGeometry.from_dict(meta["geometry"]))


def save_case(directory: Path, pair: CasePair, manifest: Dict[str, Any]) -> Path:
    '''
    Persist a simulated case: S_ma, S_gt, X_gt, X_ma, M, Tr and manifest.json.
    '''
    directory = Path(directory)
    geom = pair.s_ma.geom
    save_sinogram(directory, "S_ma", pair.s_ma)
    save_sinogram(directory, "S_gt", pair.s_gt)
    save_image(directory, "X_gt", pair.x_gt)
    save_image(directory, "X_ma", pair.x_ma)
    save_array(directory, "M", pair.mask.mask, "mask", "mask", grid=geom.grid)
    save_array(directory, "Tr", pair.trace.mask, "mask", "mask", geom=geom)
    write_json(directory / "manifest.json", manifest)
    return directory


def load_case(directory: Path) -> CasePair:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    mask, _ = load_array(directory, "M")
    trace, _ = load_array(directory, "Tr")
    return CasePair(
        s_ma=load_sinogram(directory, "S_ma"),
        x_ma=load_image(directory, "X_ma"),
        s_gt=load_sinogram(directory, "S_gt"),
        x_gt=load_image(directory, "X_gt"),
        mask=MetalMask(mask > 0.5),
        trace=MetalTrace(trace > 0.5),
        seed=int(manifest.get("seed", 0)),
        meta=manifest,
    )
