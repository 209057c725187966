"""One-layer GNN aggregation over the predicted adjacency and scoring head.

TrendModel composes the full pipeline: denoise each stock's window, patch
and embed, build per-slice similarity graphs, evolve them with the graph
state recurrence, aggregate neighbors once over the predicted adjacency,
and map each stock's relationship factor to a next-day return score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
from torch import nn

from .denoise import WaveletDenoiser
from .errors import ConfigError
from .graphs import PatchEmbedding, build_slice_graphs, patch
from .ssm import GraphStateRecurrence, run_ssgl, ssgl_bypass

DTYPE = torch.float64


def normalize_adjacency(A_hat: torch.Tensor) -> torch.Tensor:
    """Symmetric normalization D^{-1/2} A D^{-1/2} by row-sum degree.

    A unit diagonal guarantees every degree is at least 1, so no division
    guard is needed.
    """
    deg = A_hat.sum(dim=-1)
    dinv = deg.pow(-0.5)
    return dinv.unsqueeze(-1) * A_hat * dinv.unsqueeze(-2)


def gnn_aggregate(
    A_hat: torch.Tensor,
    node_feats: torch.Tensor,
    weight: torch.Tensor,
    bias: torch.Tensor,
) -> torch.Tensor:
    """Single message-passing layer: relu(norm(A) @ X @ W + b)."""
    if node_feats.shape[-1] != weight.shape[0]:
        raise ConfigError(
            f"feature dim {node_feats.shape[-1]} != gnn weight input {weight.shape[0]}"
        )
    if A_hat.shape[-1] != node_feats.shape[-2]:
        raise ConfigError("adjacency and node feature stock axes disagree")
    return torch.relu(normalize_adjacency(A_hat) @ node_feats @ weight + bias)


def score(
    Z: torch.Tensor,
    w1: torch.Tensor,
    b1: torch.Tensor,
    w2: torch.Tensor,
    b2: torch.Tensor,
) -> torch.Tensor:
    """Two-layer feed-forward head mapping each row of Z to one scalar."""
    hidden = torch.relu(Z @ w1 + b1)
    return (hidden @ w2 + b2).squeeze(-1)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; fingerprinted into checkpoints."""

    n_features: int = 6
    lookback: int = 20
    n_patches: int = 4
    hidden_dim: int = 16
    kernel_width: int = 4
    sigma: float | None = None  # None = median heuristic per slice
    use_wdn: bool = True
    use_ssgl: bool = True
    init_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class TrendModel(nn.Module):
    """End-to-end scorer for one trading day's cross-section.

    forward accepts (N, L, F) or (B, N, L, F) tensors and returns (N,) or
    (B, N) scores. All parameters are float64 and fully determined by
    ModelConfig.init_seed.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.lookback < config.n_patches:
            raise ConfigError("lookback must be at least n_patches")
        self.config = config
        D = config.hidden_dim
        P = config.lookback // config.n_patches
        g = torch.Generator().manual_seed(config.init_seed)

        self.wdn = (
            WaveletDenoiser(config.n_features, config.kernel_width, generator=g)
            if config.use_wdn
            else None
        )
        self.embedding = PatchEmbedding(config.n_features * P, D, generator=g)
        self.recurrence = GraphStateRecurrence(D, generator=g) if config.use_ssgl else None
        self.gnn_weight = nn.Parameter(
            torch.randn(D, D, dtype=DTYPE, generator=g) / math.sqrt(D)
        )
        self.gnn_bias = nn.Parameter(torch.full((D,), 0.1, dtype=DTYPE))
        self.head_w1 = nn.Parameter(
            torch.randn(D, D, dtype=DTYPE, generator=g) / math.sqrt(D)
        )
        self.head_b1 = nn.Parameter(torch.full((D,), 0.1, dtype=DTYPE))
        self.head_w2 = nn.Parameter(
            torch.randn(D, 1, dtype=DTYPE, generator=g) / math.sqrt(D)
        )
        self.head_b2 = nn.Parameter(torch.zeros(1, dtype=DTYPE))

    def predicted_adjacency(self, X: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Run the graph half of the pipeline; returns (A_hat, tokens)."""
        X = torch.as_tensor(X, dtype=DTYPE)
        if X.shape[-2] != self.config.lookback:
            raise ConfigError(
                f"window length {X.shape[-2]} != configured lookback "
                f"{self.config.lookback}"
            )
        q = self.wdn(X) if self.wdn is not None else X
        tokens = self.embedding(patch(q, self.config.n_patches))  # (..., N, n, D)
        graphs = build_slice_graphs(tokens, self.config.sigma)
        if self.recurrence is not None:
            A_hat = run_ssgl(graphs, tokens, self.recurrence)
        else:
            A_hat = ssgl_bypass(graphs)
        return A_hat, tokens

    def forward(self, X: torch.Tensor) -> torch.Tensor:
        A_hat, tokens = self.predicted_adjacency(X)
        node_feats = tokens[..., :, -1, :]  # most recent slice
        z = gnn_aggregate(A_hat, node_feats, self.gnn_weight, self.gnn_bias)
        return score(z, self.head_w1, self.head_b1, self.head_w2, self.head_b2)

    def parameter_names(self) -> list[str]:
        return [name for name, _ in self.named_parameters()]
