"""Trainable wavelet-style denoiser.

A shared Conv1d bank splits each series into a high-frequency branch H and
a low-frequency branch, the high branch is soft-thresholded with a learned
positive threshold, and the two branches are re-summed. Filters start as a
Haar difference/average pair so the split is meaningful before training.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigError

DTYPE = torch.float64


def soft_threshold(h: torch.Tensor, gamma) -> torch.Tensor:
    """Elementwise shrinkage sign(h) * max(|h| - gamma, 0)."""
    return torch.sign(h) * torch.clamp(torch.abs(h) - gamma, min=0.0)


def wdn_bypass(x: torch.Tensor) -> torch.Tensor:
    """Identity passthrough used when the denoiser is ablated."""
    return x


def haar_filter_bank(
    n_features: int,
    kernel_width: int,
    perturb: float = 0.0,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Initial (2F, F, w) conv weights: per-feature Haar difference then average.

    The two active taps sit at positions w//2 - 1 and w//2 so the filter
    combines each step with its predecessor; remaining taps are zero apart
    from an optional Gaussian perturbation.
    """
    if kernel_width < 2:
        raise ConfigError("kernel_width must be >= 2")
    w = torch.zeros(2 * n_features, n_features, kernel_width, dtype=DTYPE)
    cur = kernel_width // 2
    for k in range(n_features):
        w[k, k, cur - 1] = -0.5  # high branch: half difference
        w[k, k, cur] = 0.5
        w[n_features + k, k, cur - 1] = 0.5  # low branch: half sum
        w[n_features + k, k, cur] = 0.5
    if perturb:
        w = w + perturb * torch.randn(w.shape, dtype=DTYPE, generator=generator)
    return w


class WaveletDenoiser(nn.Module):
    """Decompose, threshold the high branch, reconstruct.

    Operates on (..., L, F) tensors with any number of leading batch axes;
    one filter bank is shared across all stocks. gamma is stored as the
    exponential of an unconstrained scalar so it stays positive.
    """

    def __init__(
        self,
        n_features: int,
        kernel_width: int = 4,
        init_gamma: float = 0.1,
        perturb: float = 0.01,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        if init_gamma <= 0:
            raise ConfigError("init_gamma must be positive")
        self.n_features = n_features
        self.kernel_width = kernel_width
        self.pad_left = kernel_width // 2
        self.pad_right = kernel_width - 1 - self.pad_left
        self.weight = nn.Parameter(
            haar_filter_bank(n_features, kernel_width, perturb, generator)
        )
        self.bias = nn.Parameter(torch.zeros(2 * n_features, dtype=DTYPE))
        self.log_gamma = nn.Parameter(
            torch.tensor(math.log(init_gamma), dtype=DTYPE)
        )

    @property
    def gamma(self) -> torch.Tensor:
        return torch.exp(self.log_gamma)

    def decompose(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Same-length conv along time; returns (high, low), each (..., L, F)."""
        lead, (L, nf) = x.shape[:-2], x.shape[-2:]
        if nf != self.n_features:
            raise ConfigError(f"expected {self.n_features} features, got {nf}")
        if L < self.kernel_width:
            raise ConfigError(
                f"series length {L} shorter than kernel width {self.kernel_width}"
            )
        flat = x.reshape(-1, L, nf).transpose(1, 2)  # (B, F, L)
        padded = F.pad(flat, (self.pad_left, self.pad_right), mode="replicate")
        out = F.conv1d(padded, self.weight, self.bias)  # (B, 2F, L)
        out = out.transpose(1, 2).reshape(*lead, L, 2 * nf)
        return out[..., :nf], out[..., nf:]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        high, low = self.decompose(x)
        return low + soft_threshold(high, self.gamma)
