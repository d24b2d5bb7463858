"""Time-dependent representations: windowed attentive pooling plus frequency encoding.

For each table (entities, relations) the previous snapshot's structural state
queries a rolling window of past time-dependent vectors through multi-head
attention; the pooled summary is blended with the structural state so the
most recent snapshot keeps a fixed share of the result. Global repetition
patterns are encoded separately from the per-query object-frequency vector.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError


class AttentivePooler(nn.Module):
    """Multi-head attention of a current state vector over its own history window.

    With an empty history the pooler falls back to returning the query state,
    which makes the blended result collapse to the structural state at the
    earliest timestamp.
    """

    def __init__(self, embed_dim: int, num_heads: int):
        super().__init__()
        if embed_dim % num_heads != 0:
            raise DataError(f"embed_dim {embed_dim} not divisible by num_heads {num_heads}")
        self.embed_dim = embed_dim
        self.num_heads = num_heads
        self.head_dim = embed_dim // num_heads
        self.query_proj = nn.Linear(embed_dim, embed_dim, bias=False)
        self.key_proj = nn.Linear(embed_dim, embed_dim, bias=False)
        self.value_proj = nn.Linear(embed_dim, embed_dim, bias=False)
        self.ffn = nn.Sequential(
            nn.Linear(embed_dim, embed_dim), nn.ReLU(), nn.Linear(embed_dim, embed_dim))

    def forward(self, current: torch.Tensor, history: torch.Tensor | None,
                return_weights: bool = False):
        """Pool ``history`` [N, K, d] keyed by ``current`` [N, d]; K == 0 falls back."""
        if history is None or history.shape[1] == 0:
            return (current, None) if return_weights else current
        n, k, d = history.shape
        if d != self.embed_dim or current.shape[-1] != self.embed_dim:
            raise DataError("attentive pooling dimension mismatch")
        m, hd = self.num_heads, self.head_dim
        q = self.query_proj(current).view(n, m, hd)
        keys = self.key_proj(history).view(n, k, m, hd)
        values = self.value_proj(history).view(n, k, m, hd)
        scores = torch.einsum("nmh,nkmh->nmk", q, keys) / math.sqrt(self.embed_dim)
        weights = F.softmax(scores, dim=-1)
        pooled = torch.einsum("nmk,nkmh->nmh", weights, values).reshape(n, d)
        out = self.ffn(pooled)
        return (out, weights) if return_weights else out


def blend(z_prev: torch.Tensor, pooled: torch.Tensor, weight: float) -> torch.Tensor:
    """Mix the previous structural state with the pooled history summary."""
    if not 0.0 <= weight <= 1.0:
        raise DataError(f"blend weight must be in [0, 1], got {weight}")
    return weight * z_prev + (1.0 - weight) * pooled


def local_query_pattern(x_s: torch.Tensor, x_r: torch.Tensor,
                        t_embed: torch.Tensor) -> torch.Tensor:
    """Concatenate subject, relation, and timestamp features into a 3d-wide pattern."""
    return torch.cat([x_s, x_r, t_embed], dim=-1)


class GlobalEncoder(nn.Module):
    """tanh-squashed linear map from an |E| frequency vector to a compact feature."""

    def __init__(self, num_entities: int, width: int):
        super().__init__()
        self.proj = nn.Linear(num_entities, width)

    def forward(self, freq: torch.Tensor) -> torch.Tensor:
        if freq.shape[-1] != self.proj.in_features:
            raise DataError(f"frequency vector has width {freq.shape[-1]}, "
                            f"expected {self.proj.in_features}")
        return torch.tanh(self.proj(freq))


class TemporalState:
    """Rolling buffer of the last window of time-dependent vectors for one table.

    ``prev`` holds the vector computed at the previous step (not yet eligible
    for pooling); ``history`` holds up to window-1 older vectors, most recent
    first. Stepping in time order keeps pooling restricted to vectors at least
    two steps old, matching the window definition.
    """

    def __init__(self, window_size: int):
        if window_size < 1:
            raise DataError(f"window_size must be >= 1, got {window_size}")
        self.window_size = window_size
        self.prev: torch.Tensor | None = None
        self.history: list[torch.Tensor] = []

    def stacked_history(self) -> torch.Tensor | None:
        if not self.history:
            return None
        return torch.stack(self.history, dim=1)  # [N, K, d]

    def advance(self, x: torch.Tensor, detach: bool = False) -> None:
        if detach:
            x = x.detach()
        if self.prev is not None:
            self.history.insert(0, self.prev)
            del self.history[self.window_size - 1:]
        self.prev = x


def roll_forward(state: TemporalState, z_prev: torch.Tensor, pooler: AttentivePooler,
                 blend_weight: float, detach: bool = False) -> torch.Tensor:
    """Advance one timestamp: pool the window keyed by z_prev, blend, push into the buffer."""
    pooled = pooler(z_prev, state.stacked_history())
    x = blend(z_prev, pooled, blend_weight)
    state.advance(x, detach=detach)
    return x
