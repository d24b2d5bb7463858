"""Quadruple dataset handling: loading, vocabularies, snapshots, event statistics.

Facts are carried as int64 arrays of shape [n, 4] with columns
(subject, relation, object, time_index). A dataset directory holds
``train.txt``, ``valid.txt``, ``test.txt`` with whitespace-separated integer
columns ``s r o raw_time`` (columns past the fourth are ignored) and optional
``entity2id.txt`` / ``relation2id.txt`` name maps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

SPLIT_NAMES = ("train", "valid", "test")


def load_quadruples(path, granularity: int = 1) -> np.ndarray:
    """Read (s, r, o, raw_time) rows; time_index = raw_time // granularity.

    Input order is preserved. Extra columns are ignored.
    """
    if granularity <= 0:
        raise DataError(f"granularity must be positive, got {granularity}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 4:
                raise DataError(f"{path}:{lineno}: expected >= 4 fields, got {len(parts)}")
            try:
                s, r, o, raw_t = int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field in {parts[:4]}") from None
            if raw_t < 0:
                raise DataError(f"{path}:{lineno}: negative raw time {raw_t}")
            if min(s, r, o) < 0:
                raise DataError(f"{path}:{lineno}: negative id in ({s}, {r}, {o})")
            rows.append((s, r, o, raw_t // granularity))
    if not rows:
        return np.empty((0, 4), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def save_quadruples(quads: np.ndarray, path) -> None:
    """Write facts as tab-separated ``s r o t`` lines (granularity-1 round trip)."""
    with open(path, "w") as fh:
        for s, r, o, t in np.asarray(quads, dtype=np.int64):
            fh.write(f"{s}\t{r}\t{o}\t{t}\n")


def _load_id_map(path) -> dict[int, str] | None:
    path = Path(path)
    if not path.exists():
        return None
    names = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) == 1:
                parts = line.split()
            if len(parts) < 2:
                continue
            try:
                names[int(parts[1])] = parts[0]
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected '<name>\\t<id>'") from None
    if len(set(names.values())) != len(names):
        raise DataError(f"{path}: id->name map is not bijective")
    return names


@dataclass(frozen=True)
class Vocabulary:
    num_entities: int
    num_relations: int  # base relations, before inverse augmentation
    num_times: int
    entity_names: dict[int, str] | None = None
    relation_names: dict[int, str] | None = None


def build_vocabulary(*splits: np.ndarray,
                     entity_names=None, relation_names=None) -> Vocabulary:
    """Derive entity/relation/time counts from the union of the given splits."""
    stacked = [np.asarray(q) for q in splits if len(q)]
    if not stacked:
        raise DataError("cannot build a vocabulary from empty splits")
    allq = np.concatenate(stacked)
    num_entities = int(max(allq[:, 0].max(), allq[:, 2].max())) + 1
    num_relations = int(allq[:, 1].max()) + 1
    num_times = int(allq[:, 3].max()) + 1
    if entity_names:
        num_entities = max(num_entities, len(entity_names))
    if relation_names:
        num_relations = max(num_relations, len(relation_names))
    return Vocabulary(num_entities, num_relations, num_times, entity_names, relation_names)


def augment_inverse(quads: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Append the inverse fact (o, r + num_relations, s, t) for every input fact.

    Subject queries (?, r, o, t) are thereafter handled as object queries on
    the inverse relation.
    """
    quads = np.asarray(quads, dtype=np.int64)
    if len(quads) == 0:
        return quads.copy()
    if quads[:, 1].max() >= vocab.num_relations:
        raise DataError("input already contains inverse relation ids; refusing to augment twice")
    inv = quads[:, [2, 1, 0, 3]].copy()
    inv[:, 1] += vocab.num_relations
    return np.concatenate([quads, inv])


@dataclass
class SnapshotSequence:
    """Per-timestamp fact groups, optionally tagged with the split each timestamp belongs to."""

    snapshots: list[np.ndarray]
    split_of: np.ndarray | None = None  # int codes indexing SPLIT_NAMES, per timestamp

    @property
    def num_times(self) -> int:
        return len(self.snapshots)

    def facts_at(self, t: int) -> np.ndarray:
        return self.snapshots[t]

    def total_facts(self) -> int:
        return sum(len(s) for s in self.snapshots)


def split_snapshots(quads: np.ndarray, vocab: Vocabulary) -> SnapshotSequence:
    """Group facts by time index; missing timestamps yield empty snapshots."""
    quads = np.asarray(quads, dtype=np.int64)
    empty = np.empty((0, 4), dtype=np.int64)
    snaps = [empty] * vocab.num_times
    if len(quads):
        order = np.argsort(quads[:, 3], kind="stable")
        ordered = quads[order]
        times, starts = np.unique(ordered[:, 3], return_index=True)
        bounds = list(starts) + [len(ordered)]
        for i, t in enumerate(times):
            snaps[int(t)] = ordered[bounds[i]:bounds[i + 1]]
    return SnapshotSequence(snaps)


@dataclass
class SplitStats:
    events: int = 0
    new_events: int = 0

    @property
    def proportion(self) -> float:
        return self.new_events / self.events if self.events else 0.0


@dataclass
class StatsReport:
    """Per-split event counts, new-event proportions, and per-timestamp new-event counts."""

    splits: dict[str, SplitStats]
    per_timestamp: list[tuple[int, str, int, int]]  # (time, split, events, new_events)

    def to_json(self) -> dict:
        return {
            name: {"events": st.events, "new_events": st.new_events, "proportion": st.proportion}
            for name, st in self.splits.items()
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_index", "split", "events", "new_events"])
            writer.writerows(self.per_timestamp)


def dataset_statistics(seq: SnapshotSequence) -> StatsReport:
    """Count events and first-time (s, r, o) occurrences while streaming timestamps in order.

    An event at time t is new iff its (s, r, o) triple never occurred at any
    k < t; duplicates within one timestamp are all new on first appearance.
    """
    chunks = [s for s in seq.snapshots if len(s)]
    splits = {name: SplitStats() for name in SPLIT_NAMES}
    splits["all"] = SplitStats()
    per_timestamp: list[tuple[int, str, int, int]] = []
    if not chunks:
        return StatsReport(splits, per_timestamp)

    allq = np.concatenate(chunks)
    _, inverse = np.unique(allq[:, :3], axis=0, return_inverse=True)
    first_time = np.full(inverse.max() + 1, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first_time, inverse, allq[:, 3])
    is_new = allq[:, 3] == first_time[inverse]

    times = allq[:, 3]
    event_counts = np.bincount(times, minlength=seq.num_times)
    new_counts = np.bincount(times[is_new], minlength=seq.num_times)
    for t in range(seq.num_times):
        if seq.split_of is not None:
            split = SPLIT_NAMES[int(seq.split_of[t])]
        else:
            split = "all"
        n_events, n_new = int(event_counts[t]), int(new_counts[t])
        per_timestamp.append((t, split, n_events, n_new))
        if n_events and split in splits:
            splits[split].events += n_events
            splits[split].new_events += n_new
        if split != "all":
            splits["all"].events += n_events
            splits["all"].new_events += n_new
    return StatsReport(splits, per_timestamp)


@dataclass
class TKGDataset:
    """Chronologically split quadruple dataset with a shared vocabulary.

    Times are re-based so the smallest index across all splits is 0; split
    time ranges must be disjoint and increasing (train < valid < test).
    """

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    vocab: Vocabulary
    granularity: int = 1

    @classmethod
    def from_arrays(cls, train, valid, test, granularity: int = 1,
                    entity_names=None, relation_names=None) -> "TKGDataset":
        train, valid, test = (np.asarray(q, dtype=np.int64).reshape(-1, 4)
                              for q in (train, valid, test))
        base = min(int(q[:, 3].min()) for q in (train, valid, test) if len(q))
        if base:
            train, valid, test = (q.copy() for q in (train, valid, test))
            for q in (train, valid, test):
                if len(q):
                    q[:, 3] -= base
        ds = cls(train, valid, test,
                 build_vocabulary(train, valid, test,
                                  entity_names=entity_names, relation_names=relation_names),
                 granularity)
        ds._check_chronology()
        return ds

    def _check_chronology(self) -> None:
        prev_max = -1
        for name in SPLIT_NAMES:
            quads = self.split(name)
            if not len(quads):
                continue
            lo, hi = int(quads[:, 3].min()), int(quads[:, 3].max())
            if lo <= prev_max:
                raise DataError(f"split {name!r} overlaps an earlier split in time "
                                f"(min time {lo} <= {prev_max})")
            prev_max = hi

    def split(self, name: str) -> np.ndarray:
        if name not in SPLIT_NAMES:
            raise DataError(f"unknown split {name!r}")
        return getattr(self, name)

    def split_times(self, name: str) -> np.ndarray:
        quads = self.split(name)
        return np.unique(quads[:, 3]) if len(quads) else np.empty(0, dtype=np.int64)

    def snapshots(self) -> list[np.ndarray]:
        """Base (non-augmented) facts grouped per timestamp across all splits."""
        allq = np.concatenate([self.train, self.valid, self.test])
        return split_snapshots(allq, self.vocab).snapshots

    def snapshot_sequence(self) -> SnapshotSequence:
        seq = split_snapshots(np.concatenate([self.train, self.valid, self.test]), self.vocab)
        split_of = np.zeros(self.vocab.num_times, dtype=np.int64)
        bound_valid = int(self.valid[:, 3].min()) if len(self.valid) else self.vocab.num_times
        bound_test = int(self.test[:, 3].min()) if len(self.test) else self.vocab.num_times
        for t in range(self.vocab.num_times):
            split_of[t] = 2 if t >= bound_test else (1 if t >= bound_valid else 0)
        seq.split_of = split_of
        return seq


def load_dataset(directory, granularity: int = 1) -> TKGDataset:
    """Load train/valid/test files plus optional id->name maps from a dataset directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"no such dataset directory: {directory}")
    splits = {}
    for name in SPLIT_NAMES:
        path = directory / f"{name}.txt"
        if not path.exists():
            raise DataError(f"missing split file: {path}")
        splits[name] = load_quadruples(path, granularity)
    entity_names = _load_id_map(directory / "entity2id.txt")
    relation_names = _load_id_map(directory / "relation2id.txt")
    ds = TKGDataset.from_arrays(splits["train"], splits["valid"], splits["test"],
                                granularity=granularity,
                                entity_names=entity_names, relation_names=relation_names)
    return ds
