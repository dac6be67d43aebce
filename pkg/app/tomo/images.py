from dataclasses import dataclass
from typing import Literal

import numpy as np

from app.constants import MU_WATER
from app.errors import ShapeError, UnitError, DataError
from app.tomo.geometry import FanBeamGeometry, ImageGrid

Unit = Literal["HU", "mu"]


def hu_to_mu(hu: np.ndarray) -> np.ndarray:
    return MU_WATER * (1.0 + np.asarray(hu) / 1000.0)


def mu_to_hu(mu: np.ndarray) -> np.ndarray:
    return (np.asarray(mu) / MU_WATER - 1.0) * 1000.0


@dataclass
class Image:
    '''
    Attenuation image on an ImageGrid, tagged with its unit.
    '''
    values: np.ndarray
    grid: ImageGrid
    unit: Unit = "mu"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ShapeError(f"Image shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.unit not in ("HU", "mu"):
            raise UnitError(f"Unknown image unit {self.unit!r}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("Image contains non-finite values")

    def to_mu(self) -> "Image":
        if self.unit == "mu":
            return self
        return Image(hu_to_mu(self.values), self.grid, "mu")

    def to_hu(self) -> "Image":
        if self.unit == "HU":
            return self
        return Image(mu_to_hu(self.values), self.grid, "HU")


@dataclass
class Sinogram:
    '''
    Post-log line integrals, views-major (num_views x num_bins).
    '''
    values: np.ndarray
    geom: FanBeamGeometry

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.geom.shape:
            raise ShapeError(f"Sinogram shape {self.values.shape} does not match geometry {self.geom.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("Sinogram contains non-finite values")

    def with_values(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(values, self.geom)
