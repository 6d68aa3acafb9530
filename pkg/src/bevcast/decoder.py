"""Recurrent decoder emitting a bivariate Gaussian per future step.

An LSTM with 128-dim state receives the context vector at each of the 31
steps; a shared affine head maps every hidden state to five raw outputs,
transformed so the distribution parameters are structurally valid: means as
is, standard deviations through exp, correlation through tanh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DomainError, NumericError, ShapeError
from .encoder import seeded_uniform_
from .social import CONTEXT_DIM

FUTURE_STEPS = 31
HIDDEN_DIM = 128
PARAM_COLUMNS = ("mu_x", "mu_y", "sigma_x", "sigma_y", "rho")

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    rho: float

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise DomainError(f"sigma must be positive, got ({self.sigma_x}, {self.sigma_y})")
        if not abs(self.rho) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.rho}")


class GaussianSequence:
    """31 per-step parameter tuples, stored as a (31, 5) float array in the
    column order (mu_x, mu_y, sigma_x, sigma_y, rho)."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (FUTURE_STEPS, 5):
            raise ShapeError(f"expected a ({FUTURE_STEPS}, 5) parameter array, got {values.shape}")
        self.values = values

    def __len__(self) -> int:
        return FUTURE_STEPS

    def step(self, k: int) -> GaussianParams:
        """1-based step index; step k is 0.16*k seconds ahead."""
        return GaussianParams(*self.values[k - 1])


class GaussianDecoder(nn.Module):
    """(B, 64) contexts -> (B, 31, 5) transformed distribution parameters."""

    def __init__(self, steps: int = FUTURE_STEPS):
        super().__init__()
        self.steps = steps
        self.lstm = nn.LSTM(input_size=CONTEXT_DIM, hidden_size=HIDDEN_DIM)
        self.head = nn.Linear(HIDDEN_DIM, 5)

    def init_parameters(self, rng: np.random.Generator) -> None:
        for name, param in self.lstm.named_parameters():
            seeded_uniform_(param, HIDDEN_DIM, rng)
        seeded_uniform_(self.head.weight, HIDDEN_DIM, rng)
        seeded_uniform_(self.head.bias, HIDDEN_DIM, rng)
        # Bias the forget gate open (sigmoid(log 2T) = 2T/(2T+1)) so the
        # zero-state transient decays over ~2x the rollout instead of a few
        # steps; with a constant input, near-0.5 gates otherwise drive the
        # hidden state to a fixed point early and every later step collapses
        # to the same output.
        with torch.no_grad():
            offset = math.log(2.0 * self.steps)
            self.lstm.bias_hh_l0[HIDDEN_DIM : 2 * HIDDEN_DIM] += offset

    def forward(self, context: torch.Tensor) -> torch.Tensor:
        if context.ndim == 1:
            context = context.unsqueeze(0)
        if context.shape[-1] != CONTEXT_DIM:
            raise ShapeError(f"expected (B, {CONTEXT_DIM}) contexts, got {tuple(context.shape)}")
        # the context is the input at every step; hidden and cell start at zero
        inputs = context.unsqueeze(0).expand(self.steps, -1, -1)
        hidden, _ = self.lstm(inputs)                 # (steps, B, 128)
        raw = self.head(hidden).permute(1, 0, 2)      # (B, steps, 5)
        mu = raw[..., 0:2]
        sigma = torch.exp(raw[..., 2:4])
        rho = torch.tanh(raw[..., 4:5])
        return torch.cat([mu, sigma, rho], dim=-1)


def decode(context: np.ndarray, decoder: GaussianDecoder) -> GaussianSequence:
    """Decode one 64-dim context vector into its 31-step parameter sequence."""
    arr = np.asarray(context, dtype=np.float64)
    if arr.shape != (CONTEXT_DIM,):
        raise ShapeError(f"expected a ({CONTEXT_DIM},) context vector, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("context vector contains non-finite values")
    dtype = next(decoder.parameters()).dtype
    with torch.no_grad():
        out = decoder(torch.from_numpy(arr).to(dtype).unsqueeze(0))
    return GaussianSequence(out.squeeze(0).numpy())


def gaussian_nll(params: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of targets under per-step bivariate
    Gaussians; ``params`` is (..., steps, 5) transformed, ``target`` (..., steps, 2)."""
    mu_x, mu_y = params[..., 0], params[..., 1]
    sigma_x, sigma_y = params[..., 2], params[..., 3]
    rho = params[..., 4]
    dx = target[..., 0] - mu_x
    dy = target[..., 1] - mu_y
    one_minus_r2 = 1.0 - rho * rho
    z = (dx / sigma_x) ** 2 + (dy / sigma_y) ** 2 - 2.0 * rho * dx * dy / (sigma_x * sigma_y)
    term = LOG_TWO_PI + torch.log(sigma_x) + torch.log(sigma_y) \
        + 0.5 * torch.log(one_minus_r2) + z / (2.0 * one_minus_r2)
    return term.mean()


def nll(params_seq: GaussianSequence, target: np.ndarray) -> float:
    """Negative log-likelihood averaged over the 31 steps (numpy path)."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (FUTURE_STEPS, 2):
        raise ShapeError(f"expected a ({FUTURE_STEPS}, 2) target, got {target.shape}")
    v = params_seq.values
    sigma_x, sigma_y, rho = v[:, 2], v[:, 3], v[:, 4]
    if np.any(sigma_x <= 0) or np.any(sigma_y <= 0):
        raise DomainError("sigma must be positive")
    if np.any(np.abs(rho) >= 1):
        raise DomainError("|rho| must be < 1")
    dx = target[:, 0] - v[:, 0]
    dy = target[:, 1] - v[:, 1]
    one_minus_r2 = 1.0 - rho * rho
    z = (dx / sigma_x) ** 2 + (dy / sigma_y) ** 2 - 2.0 * rho * dx * dy / (sigma_x * sigma_y)
    term = LOG_TWO_PI + np.log(sigma_x) + np.log(sigma_y) \
        + 0.5 * np.log(one_minus_r2) + z / (2.0 * one_minus_r2)
    return float(term.mean())


def predicted_means(params_seq: GaussianSequence) -> np.ndarray:
    """(31, 2) point predictions: the per-step means."""
    return params_seq.values[:, 0:2].copy()
