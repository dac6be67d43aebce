from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from app import constants as C
from app.errors import ConfigError


@dataclass(frozen=True)
class Spectrum:
    '''
    Discretized X-ray spectrum: energy bin centers (keV), relative fluence per
    bin (sums to 1) and the air-scan photon count per detector bin.
    '''
    energies: Tuple[float, ...]
    fluence: Tuple[float, ...]
    total_photons: float

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        f = np.asarray(self.fluence, dtype=float)
        if e.ndim != 1 or e.shape != f.shape or e.size == 0:
            raise ConfigError("Spectrum energies and fluence must be equal-length 1-D sequences")
        if np.any(e <= 10.0) or np.any(np.diff(e) <= 0):
            raise ConfigError("Spectrum energies must be strictly increasing and above 10 keV")
        if np.any(f < 0) or abs(f.sum() - 1.0) > 1e-9:
            raise ConfigError("Spectrum fluence must be nonnegative and sum to 1")
        if not self.total_photons > 0:
            raise ConfigError("total_photons must be positive")

    @classmethod
    def normalized(cls, energies: Sequence[float], weights: Sequence[float],
                   total_photons: float) -> "Spectrum":
        w = np.asarray(weights, dtype=float)
        return cls(tuple(float(e) for e in energies), tuple((w / w.sum()).tolist()), float(total_photons))

    def to_dict(self):
        return {"energies": list(self.energies), "fluence": list(self.fluence),
                "total_photons": self.total_photons}


def spectrum_120kvp(total_photons: float = C.AIR_SCAN_PHOTONS) -> Spectrum:
    """10-bin approximation of a filtered 120 kVp tungsten spectrum."""
    return Spectrum.normalized(C.SPECTRUM_120KVP_ENERGIES, C.SPECTRUM_120KVP_FLUENCE, total_photons)


def monochromatic(energy: float = C.REFERENCE_ENERGY_KEV,
                  total_photons: float = C.AIR_SCAN_PHOTONS) -> Spectrum:
    return Spectrum((float(energy),), (1.0,), float(total_photons))


def mass_attenuation(material: str, energy: float) -> float:
    '''
    Mass attenuation coefficient (cm^2/g) of a material at `energy` keV.

    Tabulated energies are returned exactly; other energies are log-log
    interpolated within the table range.

    Args:
        material (str): One of water, bone, titanium, iron, gold.
        energy (float): Photon energy in keV.
    Returns:
        float
    '''
    if material not in C.MASS_ATTENUATION:
        raise ConfigError(f"Unknown material {material!r}")
    if energy in C.SPECTRUM_120KVP_ENERGIES:
        return C.MASS_ATTENUATION[material][C.SPECTRUM_120KVP_ENERGIES.index(energy)]
    table_e = np.asarray(C.SPECTRUM_120KVP_ENERGIES)
    table_mu = np.asarray(C.MASS_ATTENUATION[material])
    if energy < table_e[0] or energy > table_e[-1]:
        raise ConfigError(f"Energy {energy} keV outside the attenuation table")
    return float(np.exp(np.interp(np.log(energy), np.log(table_e), np.log(table_mu))))
