"""
PriorNet (image domain) and SinoNet (sinogram domain): four-scale U-Nets with
stride-2 convolution downsampling, nearest x2 upsampling followed by a
convolution, skip concatenation, and a zero-initialized output layer so an
untrained network predicts a zero residual.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.config import NetworkConfig
from app.errors import ShapeError
from app.nn.layers import concat, conv2d, leaky_relu, mask_pyramid, upsample_nearest
from app.nn.tensor import Parameter, Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    zero_init: bool = False
    # None means "same" padding (kernel // 2)
    padding: Optional[int] = None
    init_scale: float = 1.0

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise ValueError("Kernel size must be odd")
        if self.stride not in (1, 2):
            raise ValueError("Stride must be 1 or 2")
        if self.padding is not None and self.padding < 0:
            raise ValueError("Padding must be non-negative")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")

    @property
    def effective_padding(self) -> int:
        return self.kernel // 2 if self.padding is None else self.padding


class Conv2d:
    '''
    Convolution layer, "same" padding unless the spec says otherwise. Weights use
    Kaiming-normal initialization for a leaky ReLU, multiplied by
    `spec.init_scale`, unless the layer is zero-initialized.
    '''

    def __init__(self, spec: ConvSpec, rng: np.random.Generator, name: str, negative_slope: float = 0.2):
        self.spec = spec
        self.padding = spec.effective_padding
        shape = (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
        if spec.zero_init:
            weight = np.zeros(shape)
        else:
            fan_in = spec.in_channels * spec.kernel * spec.kernel
            std = spec.init_scale * np.sqrt(2.0 / ((1.0 + negative_slope ** 2) * fan_in))
            weight = rng.normal(0.0, std, size=shape)
        self.weight = Parameter(weight, name=f"{name}.weight")
        self.bias = Parameter(np.zeros(spec.out_channels), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.spec.stride, self.padding)

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]


class UNet:
    '''
    Encoder-decoder with `len(channels)` scales.

    With `mask_channels` set, a max-pooled copy of an auxiliary binary mask is
    concatenated to the features entering every encoder and decoder block.
    '''

    def __init__(self, in_channels: int, config: NetworkConfig, name: str, mask_channels: bool = False,
                 seed_offset: int = 0):
        self.name = name
        self.config = config
        self.in_channels = in_channels
        self.mask_channels = mask_channels
        self.levels = len(config.channels)
        rng = np.random.default_rng([config.init_seed, seed_offset])
        slope = config.negative_slope
        extra = 1 if mask_channels else 0
        ch = config.channels
        self._layers: Dict[str, Conv2d] = {}

        def layer(key, spec):
            self._layers[key] = Conv2d(spec, rng, f"{name}.{key}", slope)
            return self._layers[key]

        for level in range(self.levels):
            c_in = in_channels + extra if level == 0 else ch[level] + extra
            layer(f"enc{level}a", ConvSpec(c_in, ch[level]))
            layer(f"enc{level}b", ConvSpec(ch[level], ch[level]))
            if level < self.levels - 1:
                layer(f"down{level}", ConvSpec(ch[level], ch[level + 1], stride=2))
        for level in reversed(range(self.levels - 1)):
            layer(f"up{level}", ConvSpec(ch[level + 1], ch[level]))
            layer(f"dec{level}a", ConvSpec(2 * ch[level] + extra, ch[level]))
            layer(f"dec{level}b", ConvSpec(ch[level], ch[level]))
        layer("head", ConvSpec(ch[0], 1, kernel=1, zero_init=True))

    def parameters(self) -> List[Parameter]:
        params = []
        for conv in self._layers.values():
            params.extend(conv.parameters())
        return params

    def _block(self, prefix: str, x: Tensor) -> Tensor:
        slope = self.config.negative_slope
        x = leaky_relu(self._layers[f"{prefix}a"](x), slope)
        return leaky_relu(self._layers[f"{prefix}b"](x), slope)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        '''
        Args:
            x (Tensor): N x in_channels x H x W.
            mask (Optional[np.ndarray]): N x 1 x H x W binary mask; required
                when the network was built with mask channels.
        Returns:
            Tensor: N x 1 x H x W prediction.
        '''
        if x.values.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.name} expects N x {self.in_channels} x H x W input, got {x.shape}")
        if self.mask_channels:
            if mask is None or mask.shape != (x.shape[0], 1) + x.shape[2:]:
                raise ShapeError(f"{self.name} needs an N x 1 x H x W mask")
            masks = mask_pyramid(mask, self.levels)
        slope = self.config.negative_slope

        def with_mask(t: Tensor, level: int, *rest: Tensor) -> Tensor:
            parts = [t, *rest]
            if self.mask_channels:
                parts.append(Tensor(masks[level]))
            return concat(parts) if len(parts) > 1 else t

        skips = []
        h = x
        for level in range(self.levels):
            h = self._block(f"enc{level}", with_mask(h, level))
            if level < self.levels - 1:
                skips.append(h)
                h = leaky_relu(self._layers[f"down{level}"](h), slope)
        for level in reversed(range(self.levels - 1)):
            skip = skips[level]
            up = upsample_nearest(h, skip.shape[2:])
            up = leaky_relu(self._layers[f"up{level}"](up), slope)
            h = self._block(f"dec{level}", with_mask(up, level, skip))
        return self._layers["head"](h)


def prior_net(config: NetworkConfig, metal_only: bool = False) -> UNet:
    '''
    Image-domain network. Input channels are [X_ma, X_LI], or [X_ma] alone for
    the metal-only ablation.
    '''
    return UNet(1 if metal_only else 2, config, "prior", seed_offset=1)


def sino_net(config: NetworkConfig) -> UNet:
    '''
    Sinogram-domain network on [sinogram channel, Tr] with the trace mask
    pyramid injected at every scale.
    '''
    return UNet(2, config, "sino", mask_channels=True, seed_offset=2)


def named_parameters(nets: Sequence[UNet]) -> Dict[str, Parameter]:
    out = {}
    for net in nets:
        for p in net.parameters():
            out[p.name] = p
    return out
