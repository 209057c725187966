"""Stock trend prediction on evolving stock graphs.

Pipeline: wavelet-style denoising of each lookback window, per-patch
Gaussian-kernel stock graphs, a state-space recurrence over graph
adjacency, one-layer GNN aggregation, and a joint regression + pairwise
ranking objective. Ships with a Topk-Drop backtester and the standard
ranking/portfolio metric suite.
"""

__version__ = "0.1.0"
