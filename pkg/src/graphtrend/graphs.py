"""Temporal patching, patch embedding, and per-slice stock similarity graphs.

The denoised lookback window is cut into n non-overlapping patches aligned
to the most recent step, each patch is embedded to a D-dimensional token,
and every temporal slice yields one dense Gaussian-kernel adjacency over
the stock universe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError

DTYPE = torch.float64


@dataclass
class SliceGraph:
    """Adjacency for one temporal patch: symmetric, unit diagonal, (0, 1]."""

    A: torch.Tensor  # (..., N, N)
    slice_index: int

    def validate(self, tol: float = 1e-12) -> None:
        A = self.A
        if (A - A.transpose(-1, -2)).abs().max() > tol:
            raise ValueError("adjacency not symmetric")
        diag = torch.diagonal(A, dim1=-2, dim2=-1)
        if (diag - 1.0).abs().max() > tol:
            raise ValueError("adjacency diagonal not 1")
        if A.min() <= 0 or A.max() > 1 + tol:
            raise ValueError("adjacency entries outside (0, 1]")


def patch(q: torch.Tensor, n: int) -> torch.Tensor:
    """Split (..., L, F) into n patches of length P = L // n, flattened.

    Any remainder steps are dropped from the start of the window so patches
    end at the most recent step. Flattening is time-major: all F features of
    step 0, then step 1, and so on. Output is (..., n, F * P).
    """
    L, nf = q.shape[-2:]
    if not 1 <= n <= L:
        raise ConfigError(f"patch count n={n} outside [1, {L}]")
    P = L // n
    q = q[..., L - n * P :, :]
    lead = q.shape[:-2]
    return q.reshape(*lead, n, P, nf).reshape(*lead, n, P * nf)


def embed(patches: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Affine map over the last axis: patches @ weight + bias."""
    if patches.shape[-1] != weight.shape[0]:
        raise ConfigError(
            f"patch dim {patches.shape[-1]} != embedding input {weight.shape[0]}"
        )
    return patches @ weight + bias


class PatchEmbedding(nn.Module):
    """Trainable linear map from flattened patches (F*P) to tokens (D)."""

    def __init__(self, in_dim: int, hidden_dim: int,
                 generator: torch.Generator | None = None):
        super().__init__()
        w = torch.randn(in_dim, hidden_dim, dtype=DTYPE, generator=generator)
        self.weight = nn.Parameter(w / math.sqrt(in_dim))
        self.bias = nn.Parameter(torch.zeros(hidden_dim, dtype=DTYPE))

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        return embed(patches, self.weight, self.bias)


def pairwise_sq_dists(tokens: torch.Tensor) -> torch.Tensor:
    """Exact pairwise squared distances over the stock axis, (..., N, N).

    Computed from explicit differences so the result is bit-symmetric with
    an exactly zero diagonal.
    """
    diff = tokens.unsqueeze(-2) - tokens.unsqueeze(-3)
    return (diff * diff).sum(dim=-1)


def median_bandwidth_sq(d2: torch.Tensor) -> torch.Tensor:
    """Median of off-diagonal pairwise squared distances, shape (...,).

    Falls back to 1.0 when the median is zero (all tokens coincide), where
    the kernel is all-ones regardless of bandwidth.
    """
    N = d2.shape[-1]
    iu = torch.triu_indices(N, N, offset=1)
    vals = d2[..., iu[0], iu[1]]
    med = vals.median(dim=-1).values
    return torch.where(med > 0, med, torch.ones_like(med))


def gaussian_graph(
    tokens_slice: torch.Tensor,
    sigma: float | torch.Tensor | None = None,
    slice_index: int = 0,
) -> SliceGraph:
    """Gaussian-kernel similarity A_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)).

    tokens_slice is (..., N, D). sigma=None selects the median heuristic,
    sigma^2 = median of pairwise squared distances within the slice.
    """
    N = tokens_slice.shape[-2]
    if N < 2:
        raise ConfigError("need at least 2 stocks to build a graph")
    d2 = pairwise_sq_dists(tokens_slice)
    if sigma is None:
        sigma_sq = median_bandwidth_sq(d2)[..., None, None]
    else:
        sigma = torch.as_tensor(sigma, dtype=tokens_slice.dtype)
        if (sigma <= 0).any():
            raise ConfigError("sigma must be positive")
        sigma_sq = sigma * sigma
    A = torch.exp(-d2 / (2.0 * sigma_sq))
    return SliceGraph(A=A, slice_index=slice_index)


def build_slice_graphs(
    tokens: torch.Tensor, sigma: float | None = None
) -> list[SliceGraph]:
    """One SliceGraph per temporal patch from (..., N, n, D) tokens."""
    n = tokens.shape[-2]
    return [
        gaussian_graph(tokens[..., :, i, :], sigma, slice_index=i)
        for i in range(n)
    ]
