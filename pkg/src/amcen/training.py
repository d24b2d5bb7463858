"""Two-stage optimization.

Stage 1 fits encoders, decoder, and the contrastive head on a convex
combination of the dual-branch ranking loss and the supervised contrastive
loss, iterating snapshots chronologically and taking one optimizer step per
timestamp (temporal buffers are detached between timestamps, so gradients
reach one roll step back plus the full structural path). Stage 2 freezes
everything, precomputes query representations once, and fits only the binary
event classifier with cross-entropy.
"""

from __future__ import annotations

import copy
import json
import random
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .classifier import contrastive_loss
from .config import TrainConfig
from .data import TKGDataset, augment_inverse
from .decoder import branch_distribution, multiclass_loss
from .errors import TrainingError
from .history import FrequencyIndex
from .network import AmcenModel, build_model


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def make_optimizer(params, config: TrainConfig):
    cls = torch.optim.AdamW if config.optimizer == "adamw" else torch.optim.Adam
    return cls(params, lr=config.learning_rate, weight_decay=config.weight_decay)


@dataclass
class QueryBatch:
    """Tensors for one batch of same-timestamp queries (inverse directions included)."""

    subjects: torch.Tensor   # [B] long
    relations: torch.Tensor  # [B] long
    gt: torch.Tensor         # [B] long
    time: int
    labels: torch.Tensor     # [B] 1 = recurring
    freq: torch.Tensor       # [B, E]
    his_mask: torch.Tensor   # [B, E]
    nhis_mask: torch.Tensor  # [B, E]


def prepare_query_batch(index: FrequencyIndex, facts: np.ndarray,
                        dtype=torch.float32, device=None) -> QueryBatch:
    facts = np.asarray(facts, dtype=np.int64).reshape(-1, 4)
    t = int(facts[0, 3])
    freq_np = index.frequency_matrix(facts[:, 0], facts[:, 1], t, dtype=np.float64)
    his_np = (freq_np > 0).astype(np.float64)
    labels_np = his_np[np.arange(len(facts)), facts[:, 2]]
    as_t = lambda a: torch.as_tensor(a, dtype=dtype, device=device)
    return QueryBatch(
        subjects=torch.as_tensor(facts[:, 0], device=device),
        relations=torch.as_tensor(facts[:, 1], device=device),
        gt=torch.as_tensor(facts[:, 2], device=device),
        time=t,
        labels=as_t(labels_np),
        freq=as_t(freq_np),
        his_mask=as_t(his_np),
        nhis_mask=as_t(1.0 - his_np),
    )


def stage1_batch_loss(model: AmcenModel, x_ent: torch.Tensor, x_rel: torch.Tensor,
                      batch: QueryBatch, config: TrainConfig):
    """Per-batch total loss plus its two components (ranking mean, contrastive sum / n)."""
    logits = model.score_queries(x_ent, x_rel, batch.subjects, batch.relations)
    if config.no_attention_mask:
        his_mask = torch.ones_like(batch.his_mask)
        nhis_mask = torch.ones_like(batch.nhis_mask)
    else:
        his_mask, nhis_mask = batch.his_mask, batch.nhis_mask
    c_his = branch_distribution(logits, his_mask, "historical", config.post_softmax_mask)
    c_nhis = branch_distribution(logits, nhis_mask, "nonhistorical", config.post_softmax_mask)
    l_mc = multiclass_loss(c_his, c_nhis, batch.gt, batch.labels,
                           his_only=config.his_only, nonhis_only=config.nonhis_only)
    weight = config.ranking_loss_weight
    n = len(batch.gt)
    if weight < 1.0 and n >= 2:
        reps = model.query_representation(x_ent, x_rel, batch.subjects, batch.relations,
                                          batch.time, batch.freq)
        l_bc = contrastive_loss(reps, batch.labels, config.temperature,
                                normalize=config.normalize_contrast) / n
    else:
        l_bc = logits.new_zeros(())
    total = weight * l_mc + (1.0 - weight) * l_bc
    return total, l_mc, l_bc


class Trainer:
    def __init__(self, model: AmcenModel, dataset: TKGDataset, config: TrainConfig,
                 out_dir=None, log_file=None):
        config.validate()
        self.model = model
        self.dataset = dataset
        self.config = config
        self.out_dir = Path(out_dir) if out_dir else None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = Path(log_file) if log_file else (
            self.out_dir / "train_log.jsonl" if self.out_dir else None)
        self.dtype = torch.float64 if config.dtype == "float64" else torch.float32

        vocab = dataset.vocab
        snaps = dataset.snapshots()
        self.snapshots = snaps
        self.augmented = [augment_inverse(s, vocab) if len(s) else s for s in snaps]
        self.graphs = [model.snapshot_graph(s) for s in snaps]
        self.empty_graph = model.snapshot_graph(np.empty((0, 4), dtype=np.int64))
        train_times = dataset.split_times("train")
        self.train_t_max = int(train_times.max()) if len(train_times) else -1
        model.set_train_time_max(max(self.train_t_max, 0))

    def _log(self, record: dict) -> None:
        if self.log_path:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(record) + "\n")

    def _prev_graph(self, t: int):
        return self.graphs[t - 1] if t > 0 else self.empty_graph

    # Stage 1: encoders + decoder + contrastive head.

    def stage1(self) -> Path | None:
        cfg = self.config
        seed_everything(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        optimizer = make_optimizer(self.model.parameters(), cfg)
        best_mrr, best_state, best_epoch = -1.0, None, -1
        for epoch in range(cfg.stage1_epochs):
            started = time.time()
            mean_loss = self._stage1_epoch(optimizer, rng, epoch)
            val_mrr = None
            if len(self.dataset.valid) and (epoch + 1) % cfg.eval_every == 0:
                val_mrr = self._validation_mrr()
                if val_mrr > best_mrr:
                    best_mrr, best_epoch = val_mrr, epoch
                    best_state = copy.deepcopy(self.model.state_dict())
            self._log({"stage": 1, "epoch": epoch, "loss": mean_loss,
                       "val_mrr": val_mrr, "seconds": round(time.time() - started, 3)})
        if best_state is not None:
            self.model.load_state_dict(best_state)
        metrics = {"best_val_mrr": best_mrr if best_mrr >= 0 else None,
                   "best_epoch": best_epoch if best_epoch >= 0 else None}
        return self._save("stage1", cfg.stage1_epochs, metrics)

    def _stage1_epoch(self, optimizer, rng, epoch: int) -> float:
        cfg = self.config
        self.model.train()
        index = FrequencyIndex(self.dataset.vocab.num_entities)
        state = self.model.initial_state()
        total_loss, total_queries = 0.0, 0
        for t in range(self.train_t_max + 1):
            x_ent, x_rel = self.model.step_time(state, self._prev_graph(t), detach=True)
            queries = self.augmented[t]
            if len(queries):
                order = rng.permutation(len(queries))
                shuffled = queries[order]
                n_t = len(shuffled)
                optimizer.zero_grad()
                timestep_loss = x_ent.new_zeros(())
                for start in range(0, n_t, cfg.batch_size):
                    chunk = shuffled[start:start + cfg.batch_size]
                    batch = prepare_query_batch(index, chunk, dtype=self.dtype)
                    loss, _, _ = stage1_batch_loss(self.model, x_ent, x_rel, batch, cfg)
                    if not torch.isfinite(loss):
                        raise TrainingError(
                            f"non-finite stage-1 loss at epoch {epoch}, time {t}, "
                            f"batch starting at query {start}")
                    timestep_loss = timestep_loss + loss * (len(chunk) / n_t)
                timestep_loss.backward()
                optimizer.step()
                total_loss += float(timestep_loss.detach()) * n_t
                total_queries += n_t
                index.absorb(queries, t)
            else:
                index.absorb(np.empty((0, 4), dtype=np.int64), t)
        return total_loss / max(total_queries, 1)

    def _validation_mrr(self) -> float:
        from .evaluation import evaluate_split  # local import to avoid a cycle

        report = evaluate_split(self.model, self.dataset, "valid", self.config,
                                use_predictive_mask=False)
        self.model.train()
        return report.directions["mean"]["mrr"]

    # Stage 2: frozen backbone, classifier only.

    def stage2(self, stage1_path=None) -> Path | None:
        cfg = self.config
        if stage1_path:
            ckpt = load_checkpoint(stage1_path, expected_config=cfg)
            restore_model(self.model, ckpt)
        seed_everything(cfg.seed + 1)
        features, labels = self._collect_representations()
        classifier_names = self.model.classifier_parameter_names()
        frozen_before = {name: p.detach().clone()
                         for name, p in self.model.named_parameters()
                         if name not in classifier_names}
        for name, p in self.model.named_parameters():
            p.requires_grad_(name in classifier_names)
        optimizer = make_optimizer(
            [p for n, p in self.model.named_parameters() if n in classifier_names], cfg)
        rng = np.random.default_rng(cfg.seed + 1)
        n = len(labels)
        accuracy = 0.0
        for epoch in range(cfg.stage2_epochs):
            order = rng.permutation(n)
            epoch_loss, correct = 0.0, 0
            for start in range(0, n, cfg.batch_size):
                sel = order[start:start + cfg.batch_size]
                probs = self.model.event_classifier(features[sel])
                target = labels[sel]
                loss = torch.nn.functional.binary_cross_entropy(
                    probs.clamp(1e-7, 1 - 1e-7), target)
                if not torch.isfinite(loss):
                    raise TrainingError(f"non-finite stage-2 loss at epoch {epoch}, "
                                        f"batch starting at sample {start}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                epoch_loss += float(loss.detach()) * len(sel)
                correct += int(((probs > 0.5).to(target.dtype) == target).sum())
            accuracy = correct / n
            self._log({"stage": 2, "epoch": epoch, "loss": epoch_loss / n,
                       "train_accuracy": accuracy})
        for _, p in self.model.named_parameters():
            p.requires_grad_(True)
        for name, before in frozen_before.items():
            after = dict(self.model.named_parameters())[name]
            if not torch.equal(before, after):
                raise TrainingError(f"frozen parameter {name!r} changed during stage 2")
        return self._save("stage2", cfg.stage2_epochs, {"classifier_train_accuracy": accuracy})

    def _collect_representations(self) -> tuple[torch.Tensor, torch.Tensor]:
        """One frozen pass over training timestamps collecting (v_q, label) per query."""
        self.model.eval()
        index = FrequencyIndex(self.dataset.vocab.num_entities)
        state = self.model.initial_state()
        feats, labs = [], []
        with torch.no_grad():
            for t in range(self.train_t_max + 1):
                x_ent, x_rel = self.model.step_time(state, self._prev_graph(t), detach=True)
                queries = self.augmented[t]
                if len(queries):
                    batch = prepare_query_batch(index, queries, dtype=self.dtype)
                    reps = self.model.query_representation(
                        x_ent, x_rel, batch.subjects, batch.relations, batch.time, batch.freq)
                    feats.append(reps)
                    labs.append(batch.labels)
                index.absorb(queries, t)
        self.model.train()
        if not feats:
            raise TrainingError("no training queries available for stage 2")
        return torch.cat(feats), torch.cat(labs)

    def _save(self, stage: str, epoch: int, metrics: dict) -> Path | None:
        if not self.out_dir:
            return None
        path = self.out_dir / f"{stage}.ckpt"
        save_checkpoint(path, self.model, self.config, stage, epoch=epoch, metrics=metrics)
        return path


def train_pipeline(dataset: TKGDataset, config: TrainConfig, out_dir,
                   stage: str = "all") -> dict[str, Path]:
    """Build a model and run the requested training stage(s); returns checkpoint paths."""
    vocab = dataset.vocab
    model = build_model(vocab.num_entities, vocab.num_relations, vocab.num_times, config)
    trainer = Trainer(model, dataset, config, out_dir=out_dir)
    paths: dict[str, Path] = {}
    if stage in ("1", "all"):
        paths["stage1"] = trainer.stage1()
    if stage in ("2", "all"):
        stage1_path = paths.get("stage1")
        if stage1_path is None and stage == "2":
            stage1_path = Path(out_dir) / "stage1.ckpt"
        paths["stage2"] = trainer.stage2(stage1_path if stage == "2" else None)
    return paths
