"""Convolve and pool the social tensor into a single context vector.

The 3x13x64 tensor is treated as a 64-channel map over 13 longitudinal x 3
lateral cells. Two unpadded convolutions collapse the lateral extent and a
2x1 max-pool compresses the longitudinal axis: 13x3 -> 11x1 -> 9x1 -> 4x1,
leaving 16 channels x 4 positions = a 64-dim context.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .encoder import FEATURE_DIM, kaiming_gain, seeded_uniform_
from .errors import ShapeError
from .raster import GRID

CONTEXT_DIM = 64
_POOL_CHANNELS = 16


class SocialPool(nn.Module):
    """(B, 3, 13, 64) social tensors -> (B, 64) context vectors."""

    def __init__(self, leaky_slope: float = 0.1):
        super().__init__()
        self.conv1 = nn.Conv2d(FEATURE_DIM, 64, kernel_size=(3, 3))
        self.conv2 = nn.Conv2d(64, _POOL_CHANNELS, kernel_size=(3, 1))
        self.pool = nn.MaxPool2d(kernel_size=(2, 1), stride=(2, 1))
        self.act = nn.LeakyReLU(leaky_slope)

    def init_parameters(self, rng: np.random.Generator) -> None:
        gain = kaiming_gain(self.act.negative_slope)
        for conv in (self.conv1, self.conv2):
            fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
            seeded_uniform_(conv.weight, fan_in, rng, gain)
            seeded_uniform_(conv.bias, fan_in, rng)

    def forward(self, tensor: torch.Tensor) -> torch.Tensor:
        if tensor.ndim == 3:
            tensor = tensor.unsqueeze(0)
        if tensor.shape[1:] != (GRID.rows, GRID.cols, FEATURE_DIM):
            raise ShapeError(f"expected (B, 3, 13, 64) social tensors, got {tuple(tensor.shape)}")
        # features become channels over a (13 longitudinal, 3 lateral) map
        x = tensor.permute(0, 3, 2, 1)     # (B, 64, 13, 3)
        x = self.act(self.conv1(x))        # (B, 64, 11, 1)
        x = self.act(self.conv2(x))        # (B, 16, 9, 1)
        x = self.pool(x)                   # (B, 16, 4, 1)
        return x.flatten(1)                # (B, 64)


def pool_social(tensor: np.ndarray, module: SocialPool) -> np.ndarray:
    """Pool one (3, 13, 64) social tensor into its 64-dim context vector."""
    arr = np.asarray(tensor)
    if arr.shape != (GRID.rows, GRID.cols, FEATURE_DIM):
        raise ShapeError(f"expected a (3, 13, 64) social tensor, got {arr.shape}")
    dtype = next(module.parameters()).dtype
    with torch.no_grad():
        out = module(torch.from_numpy(np.ascontiguousarray(arr)).to(dtype))
    return out.squeeze(0).numpy()
