"""The assembled model: embeddings, encoders, decoder, and classifier heads.

All learnable state lives here under stable names (``named_parameters``), so
checkpoints, freeze contracts, and gradient checks can address parameter
groups directly. The model itself is stateless across time; rolling temporal
buffers are carried in a ``ModelState`` owned by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .classifier import ContrastiveHead, EventClassifier
from .config import TrainConfig
from .decoder import MaskedDecoder
from .structural import SnapshotGraph, StructuralEncoder
from .temporal import (AttentivePooler, GlobalEncoder, TemporalState,
                       local_query_pattern, roll_forward)


@dataclass
class ModelState:
    entities: TemporalState
    relations: TemporalState


class AmcenModel(nn.Module):
    def __init__(self, num_entities: int, num_relations: int, num_times: int,
                 config: TrainConfig):
        super().__init__()
        config.validate()
        d = config.embed_dim
        self.num_entities = num_entities
        self.num_relations = num_relations  # base count; table also holds inverses + self-loop
        self.num_times = num_times
        self.blend_weight = config.blend_weight
        self.window_size = config.window_size
        self.num_bases = config.num_bases

        self.entity_embed = nn.Parameter(torch.empty(num_entities, d))
        nn.init.xavier_uniform_(self.entity_embed)
        rel_rows = 2 * num_relations + 1  # base, inverse, self-loop
        if self.num_bases > 0:
            self.rel_basis = nn.Parameter(torch.empty(self.num_bases, d))
            self.rel_coeff = nn.Parameter(torch.empty(rel_rows, self.num_bases))
            nn.init.xavier_uniform_(self.rel_basis)
            nn.init.xavier_uniform_(self.rel_coeff)
        else:
            self.relation_embed = nn.Parameter(torch.empty(rel_rows, d))
            nn.init.xavier_uniform_(self.relation_embed)
        self.time_embed = nn.Embedding(num_times, d)
        # Lookups clamp to the last index seen in training so extrapolation
        # beyond the training range stays defined.
        self.register_buffer("train_time_max", torch.tensor(num_times - 1, dtype=torch.long))

        activation = "softmax_relu" if config.softmax_relu_activation else "relu"
        self.structural = StructuralEncoder(
            d, config.num_layers, dropout=config.dropout,
            composition=config.composition, activation=activation)
        self.entity_pool = AttentivePooler(d, config.num_heads)
        self.relation_pool = AttentivePooler(d, config.num_heads)
        self.global_encoder = GlobalEncoder(num_entities, d)
        self.decoder = MaskedDecoder(d)
        self.contrast_head = ContrastiveHead(3 * d, d, d)
        self.event_classifier = EventClassifier(d)

    # Parameter bookkeeping.

    def relation_table(self) -> torch.Tensor:
        if self.num_bases > 0:
            return self.rel_coeff @ self.rel_basis
        return self.relation_embed

    def classifier_parameter_names(self) -> set[str]:
        return {name for name, _ in self.named_parameters()
                if name.startswith("event_classifier.")}

    def set_train_time_max(self, t: int) -> None:
        self.train_time_max.fill_(int(t))

    # Forward pieces.

    def initial_state(self) -> ModelState:
        return ModelState(TemporalState(self.window_size), TemporalState(self.window_size))

    def snapshot_graph(self, facts) -> SnapshotGraph:
        device = self.entity_embed.device
        return SnapshotGraph.from_facts(facts, self.num_entities, self.num_relations,
                                        device=device)

    def encode_snapshot(self, graph: SnapshotGraph) -> tuple[torch.Tensor, torch.Tensor]:
        return self.structural(graph, self.entity_embed, self.relation_table())

    def step_time(self, state: ModelState, prev_graph: SnapshotGraph,
                  detach: bool = False) -> tuple[torch.Tensor, torch.Tensor]:
        """Advance the rolling state by one timestamp whose previous snapshot is ``prev_graph``."""
        z_ent, z_rel = self.encode_snapshot(prev_graph)
        x_ent = roll_forward(state.entities, z_ent, self.entity_pool,
                             self.blend_weight, detach=detach)
        x_rel = roll_forward(state.relations, z_rel, self.relation_pool,
                             self.blend_weight, detach=detach)
        return x_ent, x_rel

    def time_embedding(self, t: int, batch_size: int = 1) -> torch.Tensor:
        idx = min(int(t), int(self.train_time_max.item()))
        device = self.entity_embed.device
        emb = self.time_embed(torch.tensor(idx, device=device))
        return emb.expand(batch_size, -1)

    def score_queries(self, x_ent: torch.Tensor, x_rel: torch.Tensor,
                      subjects: torch.Tensor, relations: torch.Tensor) -> torch.Tensor:
        """Similarity logits [B, E] of each (subject, relation) query against all entities."""
        return self.decoder.similarity_logits(x_ent[subjects], x_rel[relations], x_ent)

    def query_representation(self, x_ent: torch.Tensor, x_rel: torch.Tensor,
                             subjects: torch.Tensor, relations: torch.Tensor,
                             t: int, freq: torch.Tensor) -> torch.Tensor:
        """Contrastive representation v_q from the local pattern and the global frequency code."""
        h_local = local_query_pattern(
            x_ent[subjects], x_rel[relations], self.time_embedding(t, len(subjects)))
        h_global = self.global_encoder(freq)
        return self.contrast_head(h_local, h_global)


def build_model(num_entities: int, num_relations: int, num_times: int,
                config: TrainConfig) -> AmcenModel:
    """Seeded construction so identical configs yield identical initial weights."""
    torch.manual_seed(config.seed)
    model = AmcenModel(num_entities, num_relations, num_times, config)
    if config.dtype == "float64":
        model = model.double()
    return model


def model_meta(model: AmcenModel) -> dict:
    return {
        "num_entities": model.num_entities,
        "num_relations": model.num_relations,
        "num_times": model.num_times,
    }
