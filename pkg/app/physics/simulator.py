"""
Metal-artifact simulation: polychromatic Beer-Lambert projection with partial
volume sub-rays, Poisson noise, and the clean/corrupted case pairs used for
training and evaluation.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from app import constants as C
from app.config import SimulationConfig
from app.errors import DataError, UnitError
from app.mar.segmentation import MetalTrace, metal_trace
from app.physics.materials import MaterialMap, MetalMask, decompose, insert_metal
from app.physics.spectrum import Spectrum, mass_attenuation, spectrum_120kvp
from app.tomo.geometry import FanBeamGeometry
from app.tomo.images import Image, Sinogram
from app.tomo.projector import fbp, forward_project, get_projector

logger = logging.getLogger(__name__)

CONTENT_STREAM = 0
NOISE_STREAM = 1


def case_rng(seed: int, index: int = 0, stream: int = 0) -> np.random.Generator:
    '''
    Independent counter-based (Philox) stream for one case. The key is derived
    from (seed, index, stream) only, so cases can be simulated in any order or in
    parallel with identical results. Stream 0 draws case content, stream 1 noise.
    '''
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index), int(stream)])))


def subray_offsets(subrays: int) -> np.ndarray:
    """Equiangular sub-ray positions inside one bin, as fractions of the bin pitch."""
    return (np.arange(subrays) - (subrays - 1) / 2.0) / subrays


def material_line_integrals(m: MaterialMap, geom: FanBeamGeometry, offset: float = 0.0) -> Dict[str, np.ndarray]:
    """Density-weighted path lengths (mm * g/cm^3) per material."""
    proj = get_projector(geom)
    out = {}
    for material, rho in m.densities():
        out[material] = proj.project(rho, offset) if rho.any() else np.zeros(geom.shape)
    return out


def expected_intensity(m: MaterialMap, spec: Spectrum, geom: FanBeamGeometry,
                       subrays: int = C.PARTIAL_VOLUME_SUBRAYS) -> np.ndarray:
    '''
    Expected photon count per detector bin, averaged over `subrays` sub-rays.

    Args:
        m (MaterialMap): Material decomposition.
        spec (Spectrum): Source spectrum.
        geom (FanBeamGeometry): Acquisition geometry.
        subrays (int): Sub-rays per bin (partial volume).
    Returns:
        np.ndarray: Expected counts, views x bins.
    '''
    if m.grid != geom.grid:
        raise DataError("Material map grid does not match the geometry")
    total = np.zeros(geom.shape)
    for offset in subray_offsets(subrays):
        paths = material_line_integrals(m, geom, offset)
        for energy, weight in zip(spec.energies, spec.fluence):
            exponent = np.zeros(geom.shape)
            for material, path in paths.items():
                exponent += 0.1 * mass_attenuation(material, energy) * path
            total += weight * np.exp(-exponent)
    return total * spec.total_photons / subrays


def polychromatic_sinogram(m: MaterialMap, spec: Spectrum, geom: FanBeamGeometry,
                           rng: Optional[np.random.Generator] = None,
                           subrays: int = C.PARTIAL_VOLUME_SUBRAYS) -> Sinogram:
    '''
    Post-log sinogram of a polychromatic scan. With `rng` the detected counts are
    Poisson samples; without it the noise-free expectation is used.

    Counts below one photon are clamped to one (photon starvation).
    '''
    intensity = expected_intensity(m, spec, geom, subrays)
    if rng is not None:
        intensity = rng.poisson(intensity).astype(np.float64)
    starved = int(np.count_nonzero(intensity < 1.0))
    if starved:
        logger.warning("Photon starvation in %d detector bins; clamped to 1 photon", starved)
    return Sinogram(-np.log(np.maximum(intensity, 1.0) / spec.total_photons), geom)


def water_correction(s: Sinogram, spec: Spectrum, max_path_mm: float = 5000.0) -> Sinogram:
    '''
    First-order beam-hardening correction: map polychromatic post-log values of
    water to the monochromatic reference-energy line integral.

    Args:
        s (Sinogram): Polychromatic post-log sinogram.
        spec (Spectrum): Spectrum that produced it.
        max_path_mm (float): Largest tabulated water path.
    Returns:
        Sinogram: Corrected sinogram (identity for a single-energy spectrum).
    '''
    if len(spec.energies) == 1:
        return s
    path = np.linspace(0.0, max_path_mm, 20001)
    fluence = np.asarray(spec.fluence)
    mu = np.array([0.1 * mass_attenuation("water", e) for e in spec.energies])
    poly = -np.log(np.exp(-np.outer(path, mu)) @ fluence)
    mono = C.MU_WATER * path
    return s.with_values(np.interp(s.values, poly, mono))


@dataclass
class CasePair:
    '''
    One simulated case: metal-corrupted and clean sinograms/images plus masks.
    Images are in HU.
    '''
    s_ma: Sinogram
    x_ma: Image
    s_gt: Sinogram
    x_gt: Image
    mask: MetalMask
    trace: MetalTrace
    seed: int
    meta: Dict[str, Any] = field(default_factory=dict)


def simulate_case(x_clean: Image, mask: MetalMask, geom: FanBeamGeometry, seed: int,
                  config: Optional[SimulationConfig] = None, spectrum: Optional[Spectrum] = None,
                  index: int = 0) -> CasePair:
    '''
    Insert metal into a clean image and simulate the corrupted acquisition.

    Args:
        x_clean (Image): Metal-free HU image.
        mask (MetalMask): Metal mask (may be empty for a control case).
        geom (FanBeamGeometry): Acquisition geometry.
        seed (int): Dataset seed.
        config (Optional[SimulationConfig]): Simulation parameters.
        spectrum (Optional[Spectrum]): Source spectrum; 120 kVp by default.
        index (int): Case index, selects the random stream together with seed.
    Returns:
        CasePair
    '''
    config = config or SimulationConfig()
    spectrum = spectrum or spectrum_120kvp(config.total_photons)
    if x_clean.unit != "HU":
        raise UnitError("simulate_case expects an HU image")
    if x_clean.values.max() >= C.METAL_THRESHOLD_HU:
        raise DataError("Clean image already contains metal-range values")
    mask.check_grid(x_clean.grid)

    rng = case_rng(seed, index, stream=NOISE_STREAM)
    s_gt = forward_project(x_clean.to_mu(), geom)
    materials = decompose(x_clean)
    if not mask.empty:
        materials = insert_metal(materials, mask, config.metal_material, config.density)
    s_ma = polychromatic_sinogram(materials, spectrum, geom, rng, config.subrays)
    if config.water_correction:
        s_ma = water_correction(s_ma, spectrum)
    x_ma = fbp(s_ma, geom).to_hu()
    meta = {
        "seed": seed,
        "index": index,
        "spectrum": spectrum.to_dict(),
        "simulation": config.model_dump(),
    }
    return CasePair(s_ma, x_ma, s_gt, x_clean, mask, metal_trace(mask, geom), seed, meta)
