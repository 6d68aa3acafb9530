"""Weight-shared convolutional encoder for grid patches.

Each of the 39 grid cells contributes a 19-frame stack (time as channels)
of its 16x32 patch; the same two stride-2 convolutions and a 2x2 max-pool
reduce it to an 8-channel 2x4 map, flattened channel-major to a 64-vector.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import ShapeError
from .raster import GRID, RASTER_HEIGHT, RASTER_WIDTH, GridSpec

PATCH_CHANNELS = 19
FEATURE_DIM = 64

CONV1_CHANNELS = 16
CONV2_CHANNELS = 8


def seeded_uniform_(
    tensor: torch.Tensor, fan_in: int, rng: np.random.Generator, gain: float = 1.0
) -> None:
    """Fill in place with U(-gain/sqrt(fan_in), gain/sqrt(fan_in)) drawn from
    ``rng``, keeping initialization reproducible independent of torch's global
    state. Convolutions use the Kaiming gain for their leaky-ReLU slope so the
    sparse occupancy signal is not attenuated layer over layer."""
    bound = gain / np.sqrt(fan_in)
    values = rng.uniform(-bound, bound, size=tuple(tensor.shape))
    with torch.no_grad():
        tensor.copy_(torch.from_numpy(values).to(tensor.dtype))


def kaiming_gain(leaky_slope: float) -> float:
    """Uniform-bound gain sqrt(6 / (1 + slope^2)) of Kaiming initialization,
    relative to the 1/sqrt(fan_in) base bound."""
    return float(np.sqrt(6.0 / (1.0 + leaky_slope**2)))


class PatchEncoder(nn.Module):
    """(B, 19, 16, 32) -> (B, 64); parameters shared across all grid cells."""

    def __init__(self, leaky_slope: float = 0.1):
        super().__init__()
        self.conv1 = nn.Conv2d(PATCH_CHANNELS, CONV1_CHANNELS, kernel_size=5, stride=2, padding=2)
        self.conv2 = nn.Conv2d(CONV1_CHANNELS, CONV2_CHANNELS, kernel_size=5, stride=2, padding=2)
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2)
        self.act = nn.LeakyReLU(leaky_slope)

    def init_parameters(self, rng: np.random.Generator) -> None:
        gain = kaiming_gain(self.act.negative_slope)
        for conv in (self.conv1, self.conv2):
            fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
            seeded_uniform_(conv.weight, fan_in, rng, gain)
            seeded_uniform_(conv.bias, fan_in, rng)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1:] != (PATCH_CHANNELS, GRID.patch_height, GRID.patch_width):
            raise ShapeError(f"expected (B, 19, 16, 32) patch stacks, got {tuple(x.shape)}")
        x = self.act(self.conv1(x))        # (B, 16, 8, 16)
        x = self.act(self.conv2(x))        # (B, 8, 4, 8)
        x = self.pool(x)                   # (B, 8, 2, 4)
        return x.flatten(1)                # channel-major 64-vector

    def encode_scene(self, history: torch.Tensor, grid: GridSpec = GRID) -> torch.Tensor:
        """(B, 19, 48, 416) history stacks -> (B, 3, 13, 64) social tensors."""
        if history.ndim == 3:
            history = history.unsqueeze(0)
        if history.shape[1:] != (PATCH_CHANNELS, RASTER_HEIGHT, RASTER_WIDTH):
            raise ShapeError(f"expected (B, 19, 48, 416) histories, got {tuple(history.shape)}")
        b = history.shape[0]
        patches = history.reshape(
            b, PATCH_CHANNELS, grid.rows, grid.patch_height, grid.cols, grid.patch_width
        )
        # (B, rows, cols, 19, 16, 32) -> one encoder batch over all cells
        patches = patches.permute(0, 2, 4, 1, 3, 5).reshape(
            b * grid.rows * grid.cols, PATCH_CHANNELS, grid.patch_height, grid.patch_width
        )
        feats = self.forward(patches)
        return feats.reshape(b, grid.rows, grid.cols, FEATURE_DIM)


def encode_patch(patch: np.ndarray, encoder: PatchEncoder) -> np.ndarray:
    """Encode one (19, 16, 32) patch stack to its 64-dim feature vector."""
    arr = np.asarray(patch)
    if arr.shape != (PATCH_CHANNELS, GRID.patch_height, GRID.patch_width):
        raise ShapeError(f"expected a (19, 16, 32) patch stack, got {arr.shape}")
    dtype = next(encoder.parameters()).dtype
    with torch.no_grad():
        out = encoder(torch.from_numpy(np.ascontiguousarray(arr)).to(dtype).unsqueeze(0))
    return out.squeeze(0).numpy()


def encode_scene(history, encoder: PatchEncoder, grid: GridSpec = GRID) -> np.ndarray:
    """Encode 19 history rasters into the (3, 13, 64) social tensor.

    ``history`` is a sequence of SceneRasters or a (19, 48, 416) array.
    """
    if isinstance(history, np.ndarray):
        stack = history
    else:
        stack = np.stack([r.occupancy for r in history])
    if stack.shape != (PATCH_CHANNELS, RASTER_HEIGHT, RASTER_WIDTH):
        raise ShapeError(f"expected 19 rasters of 48x416, got {stack.shape}")
    dtype = next(encoder.parameters()).dtype
    with torch.no_grad():
        out = encoder.encode_scene(torch.from_numpy(np.ascontiguousarray(stack)).to(dtype), grid)
    return out.squeeze(0).numpy()
