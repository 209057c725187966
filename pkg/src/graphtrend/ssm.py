"""State-space recurrence over the sequence of slice graphs.

Per slice, three gates (state retention a_bar, input scale b_bar, emission
scale c) are derived from the slice's mean token and applied elementwise to
an N x N latent state:

    h_i    = a_bar_i * h_{i-1} + b_bar_i * A_i
    raw    = c_i * h_i
    A_hat  = sigmoid((raw + raw^T) / 2), diagonal forced to 1

a_bar passes through a sigmoid so the recurrence stays contractive. Only
the emission after the final slice feeds the downstream predictor.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError
from .graphs import SliceGraph

DTYPE = torch.float64


@dataclass
class SsmCoeffs:
    """Gate values for one slice; each has the batch shape of the summary."""

    a_bar: torch.Tensor
    b_bar: torch.Tensor
    c: torch.Tensor


def _broadcast(value, like: torch.Tensor) -> torch.Tensor:
    """Right-pad scalar/batched gate values so they broadcast over N x N."""
    v = torch.as_tensor(value, dtype=like.dtype)
    while v.dim() < like.dim():
        v = v.unsqueeze(-1)
    return v


def ssm_state_update(h_prev: torch.Tensor, A_t: torch.Tensor, a_bar, b_bar) -> torch.Tensor:
    """Linear state transition h = a_bar * h_prev + b_bar * A_t (elementwise)."""
    return _broadcast(a_bar, A_t) * h_prev + _broadcast(b_bar, A_t) * A_t


def emit(h: torch.Tensor, c) -> torch.Tensor:
    """Raw (unconstrained) emission c * h."""
    return _broadcast(c, h) * h


def constrain_adjacency(raw: torch.Tensor) -> torch.Tensor:
    """Map a raw emission back onto valid adjacency form.

    Symmetrize, squash into (0, 1) with a sigmoid, and force the diagonal
    to 1 so the result satisfies the same invariants as an observed slice
    graph.
    """
    sym = 0.5 * (raw + raw.transpose(-1, -2))
    A = torch.sigmoid(sym)
    # sigmoid's vectorized kernel is not positionally bit-stable; re-average
    # so the output is symmetric to the bit
    A = 0.5 * (A + A.transpose(-1, -2))
    eye = torch.eye(A.shape[-1], dtype=A.dtype)
    return A * (1.0 - eye) + eye


def ssm_step(
    h_prev: torch.Tensor, A_t: torch.Tensor, coeffs: SsmCoeffs
) -> tuple[torch.Tensor, torch.Tensor]:
    """One transition plus constrained emission: returns (h_t, A_hat_next)."""
    h_t = ssm_state_update(h_prev, A_t, coeffs.a_bar, coeffs.b_bar)
    return h_t, constrain_adjacency(emit(h_t, coeffs.c))


class GraphStateRecurrence(nn.Module):
    """Learnable gate projections from slice token summaries.

    The summary is the mean token over stocks, so gate shapes do not depend
    on the universe size. b_bar and c start at 1 so the initial recurrence
    passes observations through; a_bar starts at sigmoid(0) = 0.5.
    """

    def __init__(self, hidden_dim: int,
                 generator: torch.Generator | None = None):
        super().__init__()

        def w():
            return nn.Parameter(
                0.01 * torch.randn(hidden_dim, dtype=DTYPE, generator=generator)
            )

        self.w_a, self.w_b, self.w_c = w(), w(), w()
        self.beta_a = nn.Parameter(torch.tensor(0.0, dtype=DTYPE))
        self.beta_b = nn.Parameter(torch.tensor(1.0, dtype=DTYPE))
        self.beta_c = nn.Parameter(torch.tensor(1.0, dtype=DTYPE))

    def derive_coeffs(self, tokens_slice: torch.Tensor) -> SsmCoeffs:
        """Gates for one slice from its (..., N, D) tokens."""
        summary = tokens_slice.mean(dim=-2)
        return SsmCoeffs(
            a_bar=torch.sigmoid(summary @ self.w_a + self.beta_a),
            b_bar=summary @ self.w_b + self.beta_b,
            c=summary @ self.w_c + self.beta_c,
        )

    def forward(self, graphs: list[SliceGraph], tokens: torch.Tensor) -> torch.Tensor:
        return run_ssgl(graphs, tokens, self)


def run_ssgl(
    graphs: list[SliceGraph],
    tokens: torch.Tensor,
    coeffs_model: GraphStateRecurrence,
) -> torch.Tensor:
    """Evolve the state over all slices; return the final predicted adjacency.

    The state starts at zero. Each slice's observed adjacency enters through
    its own gates; the emission after the last slice predicts the next-step
    topology.
    """
    if not graphs:
        raise ConfigError("run_ssgl needs at least one slice graph")
    h = torch.zeros_like(graphs[0].A)
    coeffs = None
    for i, g in enumerate(graphs):
        coeffs = coeffs_model.derive_coeffs(tokens[..., :, i, :])
        h = ssm_state_update(h, g.A, coeffs.a_bar, coeffs.b_bar)
    return constrain_adjacency(emit(h, coeffs.c))


def ssgl_bypass(graphs: list[SliceGraph]) -> torch.Tensor:
    """Ablation path: the last observed adjacency, no recurrence."""
    if not graphs:
        raise ConfigError("ssgl_bypass needs at least one slice graph")
    return graphs[-1].A
