"""Contrastive query representations and the recurring/new event classifier.

Stage 1 shapes query representations with a supervised contrastive objective
(same-event-type queries attract, opposite-type repel); stage 2 freezes
everything else and fits a small sigmoid classifier on those representations.
At inference the classifier's verdict selects which candidate mask (historical
or non-historical) restricts the decoder's final distribution.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError


class ContrastiveHead(nn.Module):
    """Feed-forward map from concatenated local+global patterns to a d-wide representation."""

    def __init__(self, local_dim: int, global_dim: int, embed_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(local_dim + global_dim, embed_dim), nn.ReLU(),
            nn.Linear(embed_dim, embed_dim))

    def forward(self, h_local: torch.Tensor, h_global: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([h_local, h_global], dim=-1))


def contrastive_loss(reps: torch.Tensor, labels: torch.Tensor, temperature: float,
                     normalize: bool = False) -> torch.Tensor:
    """Supervised contrastive loss summed over anchors.

    For each anchor, positives are the other same-label batch members; the
    denominator runs over all other batch members. Anchors without positives
    are skipped. Representations are used unnormalized unless ``normalize``.
    """
    n = reps.shape[0]
    if n < 2:
        raise DataError(f"contrastive loss needs a batch of >= 2, got {n}")
    if temperature <= 0:
        raise DataError(f"temperature must be positive, got {temperature}")
    if normalize:
        reps = F.normalize(reps, dim=-1)
    sims = reps @ reps.T / temperature                        # [n, n]
    eye = torch.eye(n, dtype=torch.bool, device=reps.device)
    neg_inf = torch.finfo(sims.dtype).min
    log_denom = torch.logsumexp(sims.masked_fill(eye, neg_inf), dim=-1)  # over k != i
    labels = labels.reshape(-1)
    positives = (labels.unsqueeze(0) == labels.unsqueeze(1)) & ~eye
    pos_counts = positives.sum(dim=-1)
    log_probs = sims - log_denom.unsqueeze(-1)
    per_anchor = -(log_probs * positives).sum(dim=-1) / pos_counts.clamp_min(1)
    return per_anchor[pos_counts > 0].sum()


class EventClassifier(nn.Module):
    """Two-layer sigmoid head scoring how likely a query is a recurring event."""

    def __init__(self, embed_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(embed_dim, embed_dim), nn.ReLU(), nn.Linear(embed_dim, 1))

    def forward(self, reps: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(reps)).squeeze(-1)


def predicted_label(prob: torch.Tensor) -> torch.Tensor:
    """Recurring iff the score strictly exceeds 1/2 (ties resolve to new)."""
    return (prob > 0.5).to(prob.dtype)


def predictive_mask(prob: torch.Tensor, freq: torch.Tensor) -> torch.Tensor:
    """Select the historical mask for predicted-recurring queries, else its complement.

    ``prob`` is [B]; ``freq`` is the [B, E] object-frequency matrix for the
    same queries. The result always equals exactly one of the two masks.
    """
    if freq.dim() != 2 or prob.reshape(-1).shape[0] != freq.shape[0]:
        raise DataError("predictive_mask expects [B] probabilities and [B, E] frequencies")
    historical = (freq > 0).to(freq.dtype)
    recurring = (prob.reshape(-1, 1) > 0.5).to(freq.dtype)
    return recurring * historical + (1.0 - recurring) * (1.0 - historical)
