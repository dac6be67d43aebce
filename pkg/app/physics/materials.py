from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np

from app import constants as C
from app.errors import DataError, EmptyMaskError, ShapeError, UnitError
from app.physics.spectrum import mass_attenuation
from app.tomo.geometry import ImageGrid
from app.tomo.images import Image, hu_to_mu

MetalMaterial = Literal["titanium", "iron", "gold"]


@dataclass
class MetalMask:
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if self.mask.ndim != 2:
            raise ShapeError("Metal mask must be 2-D")

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    def check_grid(self, grid: ImageGrid) -> None:
        if self.mask.shape != grid.shape:
            raise ShapeError(f"Mask shape {self.mask.shape} does not match grid {grid.shape}")


@dataclass
class MaterialMap:
    '''
    Density decomposition of an image. Water density is relative to water (=1);
    bone and metal densities are in g/cm^3.
    '''
    water_density: np.ndarray
    bone_density: np.ndarray
    metal_density: np.ndarray
    grid: ImageGrid
    metal_material: MetalMaterial = "titanium"

    def __post_init__(self):
        for name in ("water_density", "bone_density", "metal_density"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.grid.shape:
                raise ShapeError(f"{name} shape {arr.shape} does not match grid {self.grid.shape}")
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise DataError(f"{name} must be finite and nonnegative")
            setattr(self, name, arr)
        if np.any((self.bone_density > 0) & (self.metal_density > 0)):
            raise DataError("Bone and metal supports overlap")

    def densities(self):
        """(material name, density map) pairs in a fixed order."""
        return (("water", self.water_density), ("bone", self.bone_density),
                (self.metal_material, self.metal_density))

    def attenuation(self, energy: float) -> Image:
        '''
        Linear attenuation image (mm^-1) at `energy` keV.
        '''
        mu = np.zeros(self.grid.shape)
        for material, rho in self.densities():
            mu += 0.1 * mass_attenuation(material, energy) * rho
        return Image(mu, self.grid, "mu")


def decompose(x: Image, bone_threshold: float = C.BONE_THRESHOLD_HU) -> MaterialMap:
    '''
    Split an HU image into water-equivalent tissue and bone by thresholding.

    Densities are scaled linearly from HU so that the decomposition reproduces
    the input attenuation at the reference energy. Metal maps are empty.

    Args:
        x (Image): Image in HU.
        bone_threshold (float): Pixels above this HU value are bone.
    Returns:
        MaterialMap
    '''
    if x.unit != "HU":
        raise UnitError("decompose expects an HU image")
    mu = np.clip(hu_to_mu(x.values), 0.0, None)
    bone = x.values > bone_threshold
    water = np.where(bone, 0.0, mu / C.MU_WATER)
    bone_density = np.where(bone, 10.0 * mu / mass_attenuation("bone", C.REFERENCE_ENERGY_KEV), 0.0)
    return MaterialMap(water, bone_density, np.zeros(x.grid.shape), x.grid)


def insert_metal(m: MaterialMap, mask: MetalMask, material: Optional[MetalMaterial] = None,
                 density: Optional[float] = None) -> MaterialMap:
    '''
    Place metal of `density` g/cm^3 on the mask, clearing tissue and bone there.

    Args:
        m (MaterialMap): Metal-free decomposition.
        mask (MetalMask): Nonempty metal mask on the same grid.
        material (Optional[MetalMaterial]): Metal type; defaults to the map's.
        density (Optional[float]): Density; defaults to the nominal density of the metal.
    Returns:
        MaterialMap: New map; the input is not modified.
    '''
    mask.check_grid(m.grid)
    if mask.empty:
        raise EmptyMaskError("Cannot insert metal with an empty mask")
    material = material or m.metal_material
    density = C.METAL_DENSITIES[material] if density is None else float(density)
    if density <= 0:
        raise DataError("Metal density must be positive")
    sel = mask.mask
    return replace(
        m,
        water_density=np.where(sel, 0.0, m.water_density),
        bone_density=np.where(sel, 0.0, m.bone_density),
        metal_density=np.where(sel, density, m.metal_density),
        metal_material=material,
    )
