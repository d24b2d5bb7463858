"""Deterministic synthetic temporal knowledge graphs for tests and smoke experiments.

The recurrence fixture mixes two event regimes over a small entity set:
relations 0..1 repeat a fixed (subject -> object) assignment at every
timestamp (recurring after their first occurrence), while relations 2..3
rotate the object by one entity id per timestamp over a window chosen so the
rotation never revisits an object (every rotation fact is a new event).
Every (subject, relation, time) and (object, relation, time) pair determines
its answer uniquely, so a model can in principle reach perfect Hits@1 in both
query directions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import TKGDataset, save_quadruples


def recurrence_fixture(num_entities: int = 20, num_relations: int = 4,
                       num_times: int = 30, valid_times: int = 3,
                       test_times: int = 3) -> TKGDataset:
    if num_relations != 4 or num_entities < 4:
        raise ValueError("the recurrence fixture is defined for 4 relations and >= 4 entities")
    half = num_entities // 2
    blocks = {0: range(0, half), 1: range(half, num_entities),
              2: range(0, half), 3: range(half, num_entities)}
    # Rotating streams stop before (s + t + r) % num_entities revisits an
    # object, so every rotation fact stays a new event.
    rotation_end = min(num_times, num_entities)
    rows = []
    for t in range(num_times):
        for r in range(num_relations):
            for s in blocks[r]:
                if r < 2:
                    o = (s + 3 + r) % num_entities
                elif t < rotation_end:
                    o = (s + t + r) % num_entities
                else:
                    continue
                rows.append((s, r, o, t))
    quads = np.asarray(rows, dtype=np.int64)
    train_end = num_times - valid_times - test_times
    valid_end = num_times - test_times
    train = quads[quads[:, 3] < train_end]
    valid = quads[(quads[:, 3] >= train_end) & (quads[:, 3] < valid_end)]
    test = quads[quads[:, 3] >= valid_end]
    return TKGDataset.from_arrays(train, valid, test)


def write_dataset(dataset: TKGDataset, directory) -> Path:
    """Materialize a dataset as train/valid/test.txt files (granularity 1)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        save_quadruples(dataset.split(name), directory / f"{name}.txt")
    return directory
