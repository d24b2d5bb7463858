"""Per-snapshot multi-relational message passing over entities and relations.

Each snapshot is encoded with L rounds of composition-based graph
convolution: every base edge delivers a message to its subject through an
outgoing-direction matrix, every inverse edge to its object through an
incoming-direction matrix, and every node receives a self-loop message.
Relation embeddings are shared across layers and transformed per layer by a
dedicated matrix. Entities untouched by the snapshot still receive the
self-loop branch, so the output is defined for every entity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError


def compose(h_src: torch.Tensor, h_rel: torch.Tensor, operator: str) -> torch.Tensor:
    """Combine neighbor and relation features along the last dimension.

    circular_correlation follows out[k] = sum_i src[i] * rel[(i + k) mod d].
    """
    if h_src.shape[-1] != h_rel.shape[-1]:
        raise DataError(f"composition dimension mismatch: {h_src.shape[-1]} vs {h_rel.shape[-1]}")
    if operator == "subtract":
        return h_src - h_rel
    if operator == "multiply":
        return h_src * h_rel
    if operator == "circular_correlation":
        fsrc = torch.fft.rfft(h_src, dim=-1)
        frel = torch.fft.rfft(h_rel, dim=-1)
        return torch.fft.irfft(torch.conj(fsrc) * frel, n=h_src.shape[-1], dim=-1)
    raise DataError(f"unknown composition operator {operator!r}")


@dataclass
class SnapshotGraph:
    """Directed message list for one timestamp: base + inverse + self-loop edges.

    ``target`` receives compose(entity[source], relation[rel]); groups are laid
    out contiguously as [base | inverse | self-loop] so direction-specific
    weights apply to slices.
    """

    target: torch.Tensor
    source: torch.Tensor
    rel: torch.Tensor
    num_base_edges: int
    num_entities: int

    @classmethod
    def from_facts(cls, facts, num_entities: int, num_relations: int,
                   device=None) -> "SnapshotGraph":
        facts = np.asarray(facts, dtype=np.int64).reshape(-1, 4)
        if len(facts):
            if facts[:, 1].max() >= num_relations:
                raise DataError("snapshot graphs must be built from base facts "
                                "(found inverse relation ids)")
            if max(facts[:, 0].max(), facts[:, 2].max()) >= num_entities:
                raise DataError("entity id out of range for snapshot graph")
        s, r, o = facts[:, 0], facts[:, 1], facts[:, 2]
        loop = np.arange(num_entities, dtype=np.int64)
        target = np.concatenate([s, o, loop])
        source = np.concatenate([o, s, loop])
        rel = np.concatenate([r, r + num_relations,
                              np.full(num_entities, 2 * num_relations, dtype=np.int64)])
        as_t = lambda a: torch.from_numpy(a).to(device) if device else torch.from_numpy(a)
        return cls(as_t(target), as_t(source), as_t(rel), len(facts), num_entities)


class StructuralEncoder(nn.Module):
    """L-layer relational graph convolution producing snapshot-level entity/relation states."""

    def __init__(self, embed_dim: int, num_layers: int, dropout: float = 0.0,
                 composition: str = "multiply", activation: str = "relu"):
        super().__init__()
        if activation not in ("relu", "softmax_relu", "identity"):
            raise DataError(f"unknown activation {activation!r}")
        self.num_layers = num_layers
        self.composition = composition
        self.activation = activation
        self.dropout = nn.Dropout(dropout)

        def weight():
            w = nn.Parameter(torch.empty(embed_dim, embed_dim))
            nn.init.xavier_uniform_(w)
            return w

        self.w_out = nn.ParameterList(weight() for _ in range(num_layers))
        self.w_in = nn.ParameterList(weight() for _ in range(num_layers))
        self.w_self = nn.ParameterList(weight() for _ in range(num_layers))
        self.w_rel = nn.ParameterList(weight() for _ in range(num_layers))

    def _activate(self, x: torch.Tensor) -> torch.Tensor:
        if self.activation == "identity":
            return x
        x = F.relu(x)
        if self.activation == "softmax_relu":
            x = F.softmax(x, dim=-1)
        return x

    def forward(self, graph: SnapshotGraph, entity_embed: torch.Tensor,
                relation_embed: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h_ent, h_rel = entity_embed, relation_embed
        n_base = graph.num_base_edges
        groups = ((slice(0, n_base), self.w_out),
                  (slice(n_base, 2 * n_base), self.w_in),
                  (slice(2 * n_base, None), self.w_self))
        for layer in range(self.num_layers):
            comp = compose(h_ent[graph.source], h_rel[graph.rel], self.composition)
            out = h_ent.new_zeros(h_ent.shape)
            for rows, weights in groups:
                if comp[rows].shape[0] == 0:
                    continue
                msg = self.dropout(comp[rows] @ weights[layer])
                out = out.index_add(0, graph.target[rows], msg)
            h_ent = self._activate(out)
            h_rel = h_rel @ self.w_rel[layer]
        return h_ent, h_rel
