"""Candidate scoring with historical / non-historical selective attention.

A single bilinear decoder scores every entity against the (subject, relation)
query; the two branches share its parameters and differ only in which
candidates their softmax may reach. Masking is applied as a large negative
logit bias before the softmax so each branch is a proper distribution over
its own support; the per-branch cross-entropy is weighted by the event-type
indicator so the off-branch (whose support cannot contain the answer)
contributes nothing. The literal post-softmax multiplicative masking is kept
behind ``post_softmax_mask`` for fidelity comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError

MASK_BIAS = -1e9
PROB_FLOOR = 1e-12


@dataclass
class ScoreDistribution:
    """Per-query probabilities over all entities plus the support they live on."""

    probs: torch.Tensor    # [B, E]
    support: torch.Tensor  # [B, E] binary; empty-support rows carry all-zero probs
    branch: str            # historical | nonhistorical | combined


class MaskedDecoder(nn.Module):
    """Scaled bilinear similarity between a 2d-wide query and d-wide entity keys."""

    def __init__(self, embed_dim: int):
        super().__init__()
        self.embed_dim = embed_dim
        self.query_proj = nn.Linear(2 * embed_dim, embed_dim, bias=False)
        self.key_proj = nn.Linear(embed_dim, embed_dim, bias=False)

    def similarity_logits(self, x_s: torch.Tensor, x_r: torch.Tensor,
                          entity_x: torch.Tensor) -> torch.Tensor:
        """Pre-softmax scores [B, E] for queries (x_s, x_r) against all entity states."""
        if x_s.shape[-1] != self.embed_dim or x_r.shape[-1] != self.embed_dim:
            raise DataError("query feature width does not match decoder dimension")
        if entity_x.shape[-1] != self.embed_dim:
            raise DataError("entity feature width does not match decoder dimension")
        q = self.query_proj(torch.cat([x_s, x_r], dim=-1))     # [B, d]
        keys = self.key_proj(entity_x)                          # [E, d]
        return q @ keys.T / math.sqrt(self.embed_dim)

    forward = similarity_logits


def branch_distribution(logits: torch.Tensor, mask: torch.Tensor,
                        branch: str = "historical",
                        post_softmax_mask: bool = False) -> ScoreDistribution:
    """Softmax restricted to the masked support; all-zero-support rows yield zero rows.

    ``post_softmax_mask`` multiplies the full softmax by the mask instead,
    leaving rows unnormalized.
    """
    if logits.shape != mask.shape:
        raise DataError(f"logits shape {tuple(logits.shape)} != mask shape {tuple(mask.shape)}")
    mask = mask.to(logits.dtype)
    if post_softmax_mask:
        probs = F.softmax(logits, dim=-1) * mask
        return ScoreDistribution(probs, mask, branch)
    # The mask product yields exact zeros off-support and all-zero rows for
    # empty supports (where the biased softmax would be uniform noise).
    probs = F.softmax(logits + MASK_BIAS * (1.0 - mask), dim=-1) * mask
    return ScoreDistribution(probs, mask, branch)


def multiclass_loss(c_his: ScoreDistribution, c_nhis: ScoreDistribution,
                    gt: torch.Tensor, labels: torch.Tensor,
                    his_only: bool = False, nonhis_only: bool = False,
                    reduction: str = "mean") -> torch.Tensor:
    """Dual cross-entropy: the branch matching the event type carries each query's loss."""
    n = c_his.probs.shape[0]
    if gt.max() >= c_his.probs.shape[1] or gt.min() < 0:
        raise DataError("ground-truth entity id outside the vocabulary")
    idx = torch.arange(n, device=gt.device)
    labels = labels.to(c_his.probs.dtype)
    nll_his = -torch.log(c_his.probs[idx, gt].clamp_min(PROB_FLOOR))
    nll_nhis = -torch.log(c_nhis.probs[idx, gt].clamp_min(PROB_FLOOR))
    if his_only:
        terms = labels * nll_his
    elif nonhis_only:
        terms = (1.0 - labels) * nll_nhis
    else:
        terms = labels * nll_his + (1.0 - labels) * nll_nhis
    if reduction == "none":
        return terms
    if reduction == "sum":
        return terms.sum()
    return terms.mean()


def combine(c_his: ScoreDistribution, c_nhis: ScoreDistribution) -> ScoreDistribution:
    """Equal mixture of the two branch distributions.

    Supports must be disjoint. A branch with empty support contributes
    nothing; the populated branch is returned at full mass so the result
    remains a distribution.
    """
    if torch.any(c_his.support * c_nhis.support > 0):
        raise DataError("branch supports overlap; masks must be complementary")
    his_empty = c_his.support.sum(dim=-1, keepdim=True) == 0
    nhis_empty = c_nhis.support.sum(dim=-1, keepdim=True) == 0
    weight_his = torch.where(nhis_empty, 1.0, 0.5)
    weight_nhis = torch.where(his_empty, 1.0, 0.5)
    probs = weight_his * c_his.probs + weight_nhis * c_nhis.probs
    support = (c_his.support + c_nhis.support).clamp(max=1.0)
    return ScoreDistribution(probs, support, "combined")
