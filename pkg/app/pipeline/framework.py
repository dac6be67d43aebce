"""
The joint MAR model: PriorNet refines the LI image, its forward projection
guides SinoNet inside the metal trace, and the composite sinogram is
reconstructed by FBP. Training and inference share this forward pass.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app import constants as C
from app.config import NetworkConfig, TrainConfig, Variant
from app.errors import DataError, ShapeError
from app.mar.completion import li_complete
from app.mar.segmentation import MetalTrace
from app.nn.checkpoint import load_checkpoint, save_checkpoint
from app.nn.layers import concat, linear_map, where
from app.nn.losses import DEFAULT_HU_SCALE, loss_fbp, loss_prior, loss_sino, loss_total
from app.nn.networks import UNet, named_parameters, prior_net, sino_net
from app.nn.tensor import Parameter, Tensor
from app.physics.materials import MetalMask
from app.tomo.geometry import FanBeamGeometry
from app.tomo.images import Sinogram, mu_to_hu
from app.tomo.projector import get_projector

logger = logging.getLogger(__name__)

IMAGE_INPUT_CLIP = (-1.0, 3.0)


@dataclass
class PreparedCase:
    '''
    Arrays for one case in the units the model consumes: images in HU,
    sinograms as post-log line integrals. Ground truth is optional.
    '''
    case_id: str
    s_ma: np.ndarray
    s_li: np.ndarray
    x_ma: np.ndarray
    x_li: np.ndarray
    trace: np.ndarray
    mask: np.ndarray
    s_gt: Optional[np.ndarray] = None
    x_gt: Optional[np.ndarray] = None


def prepare_case(case_id: str, s_ma: Sinogram, trace: MetalTrace, mask: MetalMask,
                 s_gt: Optional[Sinogram] = None, x_gt: Optional[np.ndarray] = None,
                 x_ma: Optional[np.ndarray] = None) -> PreparedCase:
    '''
    Compute S_LI, X_LI (and X_ma when not given) for a case.

    Args:
        case_id (str): Identifier used in reports.
        s_ma (Sinogram): Metal-corrupted sinogram.
        trace (MetalTrace): Metal trace.
        mask (MetalMask): Metal mask in image space.
        s_gt (Optional[Sinogram]): Clean sinogram (training / evaluation).
        x_gt (Optional[np.ndarray]): Clean HU image.
        x_ma (Optional[np.ndarray]): Uncorrected HU image; reconstructed when None.
    Returns:
        PreparedCase
    '''
    proj = get_projector(s_ma.geom)
    s_li = li_complete(s_ma, trace)
    if x_ma is None:
        x_ma = mu_to_hu(proj.fbp(s_ma.values))
    return PreparedCase(
        case_id=case_id,
        s_ma=s_ma.values,
        s_li=s_li.values,
        x_ma=np.asarray(x_ma, dtype=np.float64),
        x_li=mu_to_hu(proj.fbp(s_li.values)),
        trace=trace.mask,
        mask=mask.mask,
        s_gt=None if s_gt is None else s_gt.values,
        x_gt=None if x_gt is None else np.asarray(x_gt, dtype=np.float64),
    )


@dataclass
class Batch:
    '''N x 1 x H x W stacks of PreparedCase fields.'''
    case_ids: List[str]
    x_ma: np.ndarray
    x_li: np.ndarray
    s_li: np.ndarray
    trace: np.ndarray
    mask: np.ndarray
    s_gt: Optional[np.ndarray] = None
    x_gt: Optional[np.ndarray] = None

    @classmethod
    def from_cases(cls, cases: Sequence[PreparedCase]) -> "Batch":
        if not cases:
            raise DataError("Empty batch")

        def stack(attr):
            values = [getattr(c, attr) for c in cases]
            if any(v is None for v in values):
                return None
            return np.stack(values)[:, None]

        return cls([c.case_id for c in cases], stack("x_ma"), stack("x_li"), stack("s_li"),
                   stack("trace").astype(bool), stack("mask").astype(bool),
                   stack("s_gt"), stack("x_gt"))


@dataclass
class Outputs:
    x_prior: Optional[Tensor]
    s_prior: Optional[Tensor]
    s_res: Optional[Tensor]
    s_corr_prime: Tensor
    s_corr: Tensor
    x_out: Tensor


def image_input(hu: np.ndarray) -> np.ndarray:
    """HU -> network units (HU / 1000, clipped)."""
    return np.clip(hu * DEFAULT_HU_SCALE, *IMAGE_INPUT_CLIP)


class MARModel:
    '''
    PriorNet + SinoNet wired for one of the supported variants.

      full         PriorNet([X_ma, X_LI]) residual on X_LI; SinoNet([S_prior - S_LI, Tr]) residual on S_LI
      no_prior     no PriorNet; SinoNet([S_LI, Tr]) residual on S_LI
      no_residual  SinoNet([S_prior, Tr]) predicts S'_corr directly
      metal_only   PriorNet([X_ma]) residual on X_ma
    '''

    def __init__(self, geom: FanBeamGeometry, network: Optional[NetworkConfig] = None,
                 variant: Variant = "full", sino_scale: float = 1.0):
        if sino_scale <= 0:
            raise ShapeError("sino_scale must be positive")
        self.geom = geom
        self.network = network or NetworkConfig()
        self.variant = variant
        self.sino_scale = float(sino_scale)
        self.prior: Optional[UNet] = None
        if variant != "no_prior":
            self.prior = prior_net(self.network, metal_only=variant == "metal_only")
        self.sino = sino_net(self.network)
        self.projector = get_projector(geom)
        self.checkpoint_header: Dict[str, Any] = {}

    # parameters ------------------------------------------------------
    def nets(self) -> List[UNet]:
        return [n for n in (self.prior, self.sino) if n is not None]

    def parameters(self) -> List[Parameter]:
        return list(named_parameters(self.nets()).values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in named_parameters(self.nets()).items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = named_parameters(self.nets())
        if set(params) != set(state):
            raise DataError("Checkpoint parameters do not match the model architecture")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise DataError(f"Parameter {name} has shape {state[name].shape}, expected {p.shape}")
            p.values = np.array(state[name], dtype=np.float64)

    def quantize(self) -> None:
        '''Round parameters to the checkpoint's float32 precision.'''
        for p in self.parameters():
            p.values = p.values.astype(np.float32).astype(np.float64)

    # forward ---------------------------------------------------------
    def priornet_forward(self, x_ma: np.ndarray, x_li: np.ndarray) -> Tensor:
        '''
        X_prior in HU for N x 1 x H x W inputs.
        '''
        if self.prior is None:
            raise ShapeError("The no_prior variant has no PriorNet")
        if x_ma.shape != x_li.shape:
            raise ShapeError("X_ma and X_LI differ in shape")
        if self.variant == "metal_only":
            inputs, base = image_input(x_ma), x_ma
        else:
            inputs, base = np.concatenate([image_input(x_ma), image_input(x_li)], axis=1), x_li
        residual = self.prior(Tensor(inputs))
        return Tensor(base) + residual * (1.0 / DEFAULT_HU_SCALE)

    def project_prior(self, x_prior: Tensor) -> Tensor:
        mu = x_prior * (C.MU_WATER * DEFAULT_HU_SCALE) + C.MU_WATER
        return linear_map(mu, self.projector.project, self.projector.backproject)

    def sinonet_forward(self, s_li: np.ndarray, s_prior: Optional[Tensor], trace: np.ndarray):
        '''
        Returns:
            (S_res or None, S'_corr, S_corr) as tensors in line-integral units.
        '''
        if trace.shape != s_li.shape:
            raise ShapeError("Trace and sinogram differ in shape")
        tr = trace.astype(np.float64)
        scale = 1.0 / self.sino_scale
        s_li_t = Tensor(s_li)
        s_res = None
        if self.variant == "no_prior":
            first = Tensor(s_li * scale)
        elif self.variant == "no_residual":
            first = s_prior * scale
        else:
            s_res = s_prior - s_li_t
            first = s_res * scale
        out = self.sino(concat([first, Tensor(tr)]), mask=tr) * self.sino_scale
        s_corr_prime = out if self.variant == "no_residual" else s_li_t + out
        s_corr = where(trace, s_corr_prime, s_li_t)
        return s_res, s_corr_prime, s_corr

    def reconstruct(self, s_corr: Tensor) -> Tensor:
        '''FBP to HU, differentiable through the FBP adjoint.'''
        mu = linear_map(s_corr, self.projector.fbp, self.projector.fbp_adjoint)
        return (mu - C.MU_WATER) * (1.0 / (C.MU_WATER * DEFAULT_HU_SCALE))

    def forward(self, batch: Batch) -> Outputs:
        x_prior = s_prior = None
        if self.prior is not None:
            x_prior = self.priornet_forward(batch.x_ma, batch.x_li)
        if self.variant != "no_prior":
            s_prior = self.project_prior(x_prior)
        s_res, s_corr_prime, s_corr = self.sinonet_forward(batch.s_li, s_prior, batch.trace)
        return Outputs(x_prior, s_prior, s_res, s_corr_prime, s_corr, self.reconstruct(s_corr))

    def losses(self, out: Outputs, batch: Batch, config: Optional[TrainConfig] = None) -> Dict[str, Tensor]:
        '''
        Loss components for a batch with ground truth.
        '''
        config = config or TrainConfig()
        if batch.s_gt is None or batch.x_gt is None:
            raise DataError("Training losses need S_gt and X_gt")
        l_prior = None if out.x_prior is None else loss_prior(out.x_prior, batch.x_gt)
        scale = 1.0 / self.sino_scale
        l_sino = loss_sino(out.s_corr * scale, out.s_corr_prime * scale, batch.s_gt * scale, config.beta)
        l_fbp = loss_fbp(out.x_out, batch.x_gt, batch.mask)
        total = loss_total(l_prior, l_sino, l_fbp, config.alpha1, config.alpha2)
        components = {"total": total, "sino": l_sino, "fbp": l_fbp}
        if l_prior is not None:
            components["prior"] = l_prior
        return components

    # persistence -----------------------------------------------------
    def header(self) -> Dict[str, Any]:
        return {
            "variant": self.variant,
            "network": self.network.model_dump(),
            "sino_scale": self.sino_scale,
            "hu_scale": DEFAULT_HU_SCALE,
            "geometry": self.geom.to_dict(),
        }

    def save(self, path: Path, **extra) -> Path:
        return save_checkpoint(path, {**self.header(), **extra}, self.state_dict())

    @classmethod
    def load(cls, path: Path, geom: Optional[FanBeamGeometry] = None) -> "MARModel":
        '''
        Rebuild a model from a checkpoint.

        Args:
            path (Path): Checkpoint file.
            geom (Optional[FanBeamGeometry]): Expected geometry; must match the stored one.
        Returns:
            MARModel
        '''
        header, params = load_checkpoint(path)
        stored = FanBeamGeometry.from_dict(header["geometry"])
        if geom is not None and geom != stored:
            raise DataError("Checkpoint geometry does not match the data geometry")
        model = cls(stored, NetworkConfig(**header["network"]), header["variant"], header["sino_scale"])
        model.load_state_dict(params)
        model.checkpoint_header = header
        return model
