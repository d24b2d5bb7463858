"""Two-stage inference and ranking metrics.

Inference first asks the event classifier which candidate pool the answer
should come from, then ranks entities by the mask-refined mixture of the two
branch distributions. Evaluation streams timestamps in order: ground-truth
facts of a timestamp enter the history index only after that timestamp was
scored. Each test fact is queried in both directions (object query, and
subject query routed through the inverse relation) and metrics are averaged
over the two directions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .classifier import predictive_mask
from .config import TrainConfig
from .data import TKGDataset, augment_inverse
from .decoder import ScoreDistribution, branch_distribution, combine
from .errors import DataError
from .history import FrequencyIndex
from .network import AmcenModel
from .training import QueryBatch, prepare_query_batch

logger = logging.getLogger(__name__)

HITS_AT = (1, 3, 10)


def rank_of(scores: np.ndarray, gt: int) -> int:
    """1-based rank of gt under descending score; ties broken by lower entity id."""
    scores = np.asarray(scores).reshape(-1)
    gt_score = scores[gt]
    higher = int((scores > gt_score).sum())
    tied_lower_id = int((scores[:gt] == gt_score).sum())
    return 1 + higher + tied_lower_id


def metrics_from_ranks(ranks) -> dict[str, float]:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        return {"mrr": 0.0, **{f"hits{k}": 0.0 for k in HITS_AT}}
    out = {"mrr": float((1.0 / ranks).mean())}
    for k in HITS_AT:
        out[f"hits{k}"] = float((ranks <= k).mean())
    return out


def combined_distribution(logits: torch.Tensor, his_mask: torch.Tensor,
                          nhis_mask: torch.Tensor, config: TrainConfig) -> ScoreDistribution:
    """Mixture of the two selective-attention branches, honoring ablation switches."""
    if config.no_attention_mask:
        ones = torch.ones_like(logits)
        return branch_distribution(logits, ones, "combined")
    c_his = branch_distribution(logits, his_mask, "historical", config.post_softmax_mask)
    c_nhis = branch_distribution(logits, nhis_mask, "nonhistorical", config.post_softmax_mask)
    if config.his_only:
        return ScoreDistribution(c_his.probs, c_his.support, "combined")
    if config.nonhis_only:
        return ScoreDistribution(c_nhis.probs, c_nhis.support, "combined")
    return combine(c_his, c_nhis)


@dataclass
class QueryResult:
    subject: int
    relation: int
    time: int
    gt: int
    direction: str
    label: int
    predicted_label: int
    rank: int
    rank_filtered: int | None = None


@dataclass
class MetricsReport:
    mode: str
    directions: dict[str, dict[str, float]]
    classifier_accuracy: float | None
    num_queries: int

    def to_json(self) -> list[dict]:
        rows = []
        for direction, metrics in self.directions.items():
            row = {"mode": self.mode, "direction": direction, **metrics,
                   "classifier_accuracy": self.classifier_accuracy}
            rows.append(row)
        return rows


class InferenceSession:
    """Rolls model state and history forward in time for scoring queries.

    ``advance()`` computes representations for the next timestamp;
    ``complete()`` then absorbs that timestamp's ground truth. Splitting the
    two keeps evaluation honest: a timestamp is always scored before its facts
    become history.
    """

    def __init__(self, model: AmcenModel, dataset: TKGDataset, config: TrainConfig):
        self.model = model
        self.dataset = dataset
        self.config = config
        self.dtype = torch.float64 if config.dtype == "float64" else torch.float32
        self.snapshots = dataset.snapshots()
        self.augmented = [augment_inverse(s, dataset.vocab) if len(s) else s
                          for s in self.snapshots]
        self.graphs = [model.snapshot_graph(s) for s in self.snapshots]
        self.empty_graph = model.snapshot_graph(np.empty((0, 4), dtype=np.int64))
        self.index = FrequencyIndex(dataset.vocab.num_entities)
        self.state = model.initial_state()
        self.next_t = 0
        self.current_t = -1
        self.reps: tuple[torch.Tensor, torch.Tensor] | None = None
        model.eval()

    def advance(self) -> tuple[torch.Tensor, torch.Tensor]:
        t = self.next_t
        if t >= len(self.snapshots) + 1:
            raise DataError("advanced past the end of the timeline")
        prev = self.graphs[t - 1] if t > 0 else self.empty_graph
        with torch.no_grad():
            self.reps = self.model.step_time(self.state, prev, detach=True)
        self.current_t = t
        self.next_t = t + 1
        return self.reps

    def complete(self) -> None:
        t = self.current_t
        facts = self.augmented[t] if t < len(self.augmented) else np.empty((0, 4), np.int64)
        self.index.absorb(facts, t)

    def warm_to(self, t: int) -> None:
        """Advance (and absorb) every timestamp strictly before t."""
        while self.next_t < t:
            self.advance()
            self.complete()

    def score_batch(self, batch: QueryBatch, use_predictive_mask: bool = True,
                    gt_mask_override: bool = False):
        """Final scores, branch mixture, and predicted labels for one query batch."""
        if self.reps is None:
            raise DataError("advance() must run before scoring")
        cfg = self.config
        x_ent, x_rel = self.reps
        with torch.no_grad():
            logits = self.model.score_queries(x_ent, x_rel, batch.subjects, batch.relations)
            combined = combined_distribution(logits, batch.his_mask, batch.nhis_mask, cfg)
            reps = self.model.query_representation(
                x_ent, x_rel, batch.subjects, batch.relations, batch.time, batch.freq)
            class_prob = self.model.event_classifier(reps)
            pred_labels = (class_prob > 0.5).to(batch.labels.dtype)
            if cfg.no_predictive_mask or not use_predictive_mask:
                final = combined.probs
            else:
                if gt_mask_override or cfg.gt_predictive_mask:
                    mask_prob = batch.labels  # ground-truth event type picks the mask
                else:
                    mask_prob = class_prob
                mask = predictive_mask(mask_prob, batch.freq)
                final = combined.probs * mask
                dead = final.sum(dim=-1) <= 0
                if dead.any():
                    logger.warning("predictive mask removed all probability mass for "
                                   "%d queries at t=%d; falling back to the unmasked "
                                   "distribution", int(dead.sum()), batch.time)
                    final = torch.where(dead.unsqueeze(-1), combined.probs, final)
        return final, combined, pred_labels

    def infer(self, subject: int, relation: int, use_predictive_mask: bool = True,
              gt: int | None = None, gt_mask_override: bool = False):
        """Score one query at the session's current timestamp.

        Returns (ScoreDistribution over all entities, predicted entity id,
        predicted event label). Ties resolve to the lowest entity id.
        """
        t = self.current_t
        facts = np.array([[subject, relation, gt if gt is not None else 0, t]])
        batch = prepare_query_batch(self.index, facts, dtype=self.dtype)
        final, combined, pred_labels = self.score_batch(
            batch, use_predictive_mask=use_predictive_mask, gt_mask_override=gt_mask_override)
        scores = final[0].cpu().numpy()
        support = (final[0] > 0).to(final.dtype).cpu()
        dist = ScoreDistribution(final[0].cpu(), support, "combined")
        return dist, int(np.argmax(scores)), int(pred_labels[0].item())


def evaluate_split(model: AmcenModel, dataset: TKGDataset, split: str,
                   config: TrainConfig, use_predictive_mask: bool = True,
                   gt_mask_override: bool = False, with_filtered: bool = False,
                   collect: bool = False):
    """Rank every fact of the split in both directions and aggregate metrics.

    Returns a MetricsReport (raw-mode ranks); filtered-mode ranks are attached
    as a second report when ``with_filtered``. With ``collect``, per-query
    results are returned as well.
    """
    was_training = model.training
    session = InferenceSession(model, dataset, config)
    split_facts = dataset.split(split)
    if not len(split_facts):
        raise DataError(f"split {split!r} is empty")
    first_t = int(split_facts[:, 3].min())
    last_t = int(split_facts[:, 3].max())
    session.warm_to(first_t)

    num_rel = dataset.vocab.num_relations
    results: list[QueryResult] = []
    ranks = {"obj": [], "subj": []}
    ranks_f = {"obj": [], "subj": []}
    label_hits = 0

    for t in range(first_t, last_t + 1):
        session.advance()
        in_split = split_facts[split_facts[:, 3] == t]
        if len(in_split):
            queries = augment_inverse(in_split, dataset.vocab)
            batch = prepare_query_batch(session.index, queries, dtype=session.dtype)
            final, _, pred_labels = session.score_batch(
                batch, use_predictive_mask=use_predictive_mask,
                gt_mask_override=gt_mask_override)
            scores = final.cpu().numpy().astype(np.float64)
            labels = batch.labels.cpu().numpy()
            preds = pred_labels.cpu().numpy()
            answers: dict[tuple[int, int], list[int]] = {}
            if with_filtered:
                for s, r, o, _ in queries:
                    answers.setdefault((int(s), int(r)), []).append(int(o))
            for i, (s, r, o, _) in enumerate(queries):
                direction = "obj" if r < num_rel else "subj"
                rank = rank_of(scores[i], int(o))
                ranks[direction].append(rank)
                rank_filtered = None
                if with_filtered:
                    filtered = scores[i].copy()
                    for other in answers[(int(s), int(r))]:
                        if other != int(o):
                            filtered[other] = -np.inf
                    rank_filtered = rank_of(filtered, int(o))
                    ranks_f[direction].append(rank_filtered)
                label_hits += int(preds[i] == labels[i])
                if collect:
                    results.append(QueryResult(int(s), int(r), t, int(o), direction,
                                               int(labels[i]), int(preds[i]),
                                               rank, rank_filtered))
        session.complete()

    n_queries = len(ranks["obj"]) + len(ranks["subj"])
    accuracy = label_hits / n_queries if n_queries else None

    def build(mode, rank_map):
        per_dir = {d: metrics_from_ranks(rank_map[d]) for d in ("obj", "subj")}
        mean = {k: (per_dir["obj"][k] + per_dir["subj"][k]) / 2.0 for k in per_dir["obj"]}
        return MetricsReport(mode, {**per_dir, "mean": mean}, accuracy, n_queries)

    report = build("raw", ranks)
    if was_training:
        model.train()
    out = [report]
    if with_filtered:
        out.append(build("filtered", ranks_f))
    if collect:
        out.append(results)
    return out[0] if len(out) == 1 else tuple(out)


def write_query_csv(results: list[QueryResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "relation", "time", "direction", "gt",
                         "label", "predicted_label", "rank", "rank_filtered"])
        for r in results:
            writer.writerow([r.subject, r.relation, r.time, r.direction, r.gt,
                             r.label, r.predicted_label, r.rank,
                             "" if r.rank_filtered is None else r.rank_filtered])
