"""Cumulative (subject, relation) -> object occurrence history.

The index absorbs snapshots strictly in time order and answers, for any
t <= frontier, how often each object completed a given (s, r) pair before t.
Frequency vectors drive the global temporal features, the historical /
non-historical candidate masks, and the recurring-vs-new event labels.

Counts are stored sparsely as per-object sorted occurrence-time lists, so
queries at past frontiers stay exact and dense |E|-vectors are materialized
only on demand.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from bisect import bisect_left

import numpy as np

from .errors import CheckpointError, SequencingError, StalenessError

INDEX_FORMAT_VERSION = 1


class FrequencyIndex:
    def __init__(self, num_entities: int):
        self.num_entities = int(num_entities)
        self.frontier_time = 0
        # (s, r) -> {o: sorted list of occurrence times}
        self._times: dict[tuple[int, int], dict[int, list[int]]] = {}

    def absorb(self, facts: np.ndarray, t: int) -> None:
        """Fold the snapshot at time t into the counts; advances the frontier to t + 1.

        Inverse-augmented facts should be included so subject queries (routed
        through inverse relations) see correct histories.
        """
        if t != self.frontier_time:
            raise SequencingError(
                f"snapshot at t={t} absorbed out of order (frontier is {self.frontier_time})")
        facts = np.asarray(facts, dtype=np.int64).reshape(-1, 4)
        if len(facts) and not (facts[:, 3] == t).all():
            raise SequencingError(f"snapshot contains facts with time != {t}")
        for s, r, o, _ in facts:
            self._times.setdefault((int(s), int(r)), {}).setdefault(int(o), []).append(t)
        self.frontier_time = t + 1

    def _check_time(self, t: int) -> None:
        if t > self.frontier_time:
            raise StalenessError(
                f"history queried at t={t} but only absorbed up to {self.frontier_time}")

    def _objects(self, s: int, r: int) -> dict[int, list[int]]:
        return self._times.get((int(s), int(r)), {})

    def frequency_vector(self, s: int, r: int, t: int) -> np.ndarray:
        """Dense |E|-vector: entry o counts quadruples (s, r, o, k) with k < t."""
        self._check_time(t)
        vec = np.zeros(self.num_entities, dtype=np.int64)
        for o, ts in self._objects(s, r).items():
            c = bisect_left(ts, t)
            if c:
                vec[o] = c
        return vec

    def historical_mask(self, s: int, r: int, t: int) -> np.ndarray:
        """Binary |E|-vector marking objects seen for (s, r) before t."""
        self._check_time(t)
        mask = np.zeros(self.num_entities, dtype=np.float32)
        for o, ts in self._objects(s, r).items():
            if ts[0] < t:
                mask[o] = 1.0
        return mask

    def nonhistorical_mask(self, s: int, r: int, t: int) -> np.ndarray:
        """Complement of the historical mask."""
        return 1.0 - self.historical_mask(s, r, t)

    def event_label(self, s: int, r: int, o: int, t: int) -> int:
        """1 if (s, r, o) occurred before t (recurring event), else 0 (new event)."""
        self._check_time(t)
        ts = self._objects(s, r).get(int(o))
        return int(ts is not None and ts[0] < t)

    # Batched views used by training and evaluation.

    def frequency_matrix(self, subjects, relations, t: int,
                         dtype=np.float32) -> np.ndarray:
        self._check_time(t)
        out = np.zeros((len(subjects), self.num_entities), dtype=dtype)
        for i, (s, r) in enumerate(zip(subjects, relations)):
            for o, ts in self._objects(s, r).items():
                c = bisect_left(ts, t)
                if c:
                    out[i, o] = c
        return out

    def mask_matrices(self, subjects, relations, t: int) -> tuple[np.ndarray, np.ndarray]:
        self._check_time(t)
        his = np.zeros((len(subjects), self.num_entities), dtype=np.float32)
        for i, (s, r) in enumerate(zip(subjects, relations)):
            for o, ts in self._objects(s, r).items():
                if ts[0] < t:
                    his[i, o] = 1.0
        return his, 1.0 - his

    def event_labels(self, facts: np.ndarray) -> np.ndarray:
        facts = np.asarray(facts, dtype=np.int64).reshape(-1, 4)
        return np.array([self.event_label(s, r, o, t) for s, r, o, t in facts],
                        dtype=np.float32)

    # Optional on-disk cache (versioned blob keyed by a dataset hash).

    def save(self, path, dataset_hash: str = "") -> None:
        rows = []
        for (s, r), objs in self._times.items():
            for o, ts in objs.items():
                rows.extend((s, r, o, t) for t in ts)
        arr = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
        header = {
            "format_version": INDEX_FORMAT_VERSION,
            "num_entities": self.num_entities,
            "frontier_time": self.frontier_time,
            "dataset_hash": dataset_hash,
            "num_rows": len(arr),
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("header.json", json.dumps(header))
            zf.writestr("occurrences.npy", arr.tobytes())

    @classmethod
    def load(cls, path, dataset_hash: str = "") -> "FrequencyIndex":
        try:
            with zipfile.ZipFile(path) as zf:
                header = json.loads(zf.read("header.json"))
                raw = zf.read("occurrences.npy")
        except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable index cache {path}: {exc}") from None
        if header.get("format_version") != INDEX_FORMAT_VERSION:
            raise CheckpointError(f"unsupported index cache version in {path}")
        if dataset_hash and header.get("dataset_hash") != dataset_hash:
            raise CheckpointError(f"index cache {path} was built from a different dataset")
        arr = np.frombuffer(raw, dtype=np.int64).reshape(-1, 4)
        if len(arr) != header["num_rows"]:
            raise CheckpointError(f"index cache {path} is truncated")
        index = cls(header["num_entities"])
        order = np.argsort(arr[:, 3], kind="stable")
        for s, r, o, t in arr[order]:
            index._times.setdefault((int(s), int(r)), {}).setdefault(int(o), []).append(int(t))
        index.frontier_time = header["frontier_time"]
        return index


def dataset_hash(facts: np.ndarray) -> str:
    """Stable content hash used to key cached indexes to their source facts."""
    arr = np.ascontiguousarray(np.asarray(facts, dtype=np.int64))
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]
