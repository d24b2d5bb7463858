import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amcen.data import augment_inverse, build_vocabulary, dataset_statistics, split_snapshots
from amcen.errors import SequencingError, StalenessError
from amcen.history import FrequencyIndex, dataset_hash

from oracles import brute_frequency, brute_new_flags, random_quadruples


def build_index(quads, num_entities, upto=None):
    index = FrequencyIndex(num_entities)
    t_max = int(quads[:, 3].max()) if len(quads) else -1
    upto = t_max + 1 if upto is None else upto
    for t in range(upto):
        index.absorb(quads[quads[:, 3] == t], t)
    return index


class TestAbsorb:
    def test_out_of_order_rejected(self):
        index = FrequencyIndex(4)
        index.absorb(np.array([[0, 0, 1, 0]]), 0)
        with pytest.raises(SequencingError):
            index.absorb(np.array([[0, 0, 1, 0]]), 0)
        with pytest.raises(SequencingError):
            index.absorb(np.array([[0, 0, 1, 5]]), 5)

    def test_wrong_time_column_rejected(self):
        index = FrequencyIndex(4)
        with pytest.raises(SequencingError, match="time"):
            index.absorb(np.array([[0, 0, 1, 3]]), 0)

    def test_counts_accumulate(self):
        index = FrequencyIndex(4)
        index.absorb(np.array([[0, 0, 1, 0]]), 0)
        index.absorb(np.array([[0, 0, 1, 1]]), 1)
        vec = index.frequency_vector(0, 0, 2)
        assert vec[1] == 2 and vec.sum() == 2

    def test_matches_recount_oracle(self, rng):
        quads = random_quadruples(rng, 200, 8, 3, 10)
        index = build_index(quads, 8)
        for _ in range(30):
            s, r = int(rng.integers(8)), int(rng.integers(3))
            t = int(rng.integers(11))
            assert np.array_equal(index.frequency_vector(s, r, t),
                                  brute_frequency(quads, s, r, t, 8))


class TestFrequencyVector:
    def test_zero_before_any_history(self):
        index = FrequencyIndex(5)
        assert index.frequency_vector(0, 0, 0).sum() == 0

    def test_staleness_error(self):
        index = FrequencyIndex(5)
        index.absorb(np.array([[0, 0, 1, 0]]), 0)
        with pytest.raises(StalenessError):
            index.frequency_vector(0, 0, 2)

    def test_monotone_in_time(self, rng):
        quads = random_quadruples(rng, 120, 6, 2, 8)
        index = build_index(quads, 6)
        for _ in range(10):
            s, r, o = (int(rng.integers(6)), int(rng.integers(2)), int(rng.integers(6)))
            counts = [index.frequency_vector(s, r, t)[o] for t in range(9)]
            assert all(a <= b for a, b in zip(counts, counts[1:]))

    def test_batch_matrix_matches_single_queries(self, rng):
        quads = random_quadruples(rng, 100, 7, 3, 6)
        index = build_index(quads, 7)
        subjects = rng.integers(0, 7, size=20)
        relations = rng.integers(0, 3, size=20)
        mat = index.frequency_matrix(subjects, relations, 6, dtype=np.int64)
        for i in range(20):
            assert np.array_equal(mat[i], index.frequency_vector(subjects[i], relations[i], 6))


class TestMasks:
    def test_no_history_masks(self):
        index = FrequencyIndex(6)
        assert index.historical_mask(0, 0, 0).sum() == 0
        assert index.nonhistorical_mask(0, 0, 0).sum() == 6

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_complementarity(self, seed):
        rng = np.random.default_rng(seed)
        quads = random_quadruples(rng, 60, 6, 2, 6)
        index = build_index(quads, 6)
        for _ in range(20):
            s, r, t = int(rng.integers(6)), int(rng.integers(2)), int(rng.integers(7))
            his = index.historical_mask(s, r, t)
            nhis = index.nonhistorical_mask(s, r, t)
            assert np.array_equal(his + nhis, np.ones(6, dtype=np.float32))
            assert set(np.unique(his)) <= {0.0, 1.0}

    def test_mask_is_indicator_of_frequency(self, rng):
        quads = random_quadruples(rng, 90, 5, 2, 7)
        index = build_index(quads, 5)
        for _ in range(15):
            s, r, t = int(rng.integers(5)), int(rng.integers(2)), int(rng.integers(8))
            freq = index.frequency_vector(s, r, t)
            assert np.array_equal(index.historical_mask(s, r, t), (freq > 0).astype(np.float32))


class TestEventLabels:
    def test_first_and_second_occurrence(self):
        index = FrequencyIndex(4)
        index.absorb(np.array([[0, 0, 1, 0]]), 0)
        assert index.event_label(0, 0, 1, 0) == 0  # at its own first timestamp
        index.absorb(np.empty((0, 4), dtype=np.int64), 1)
        assert index.event_label(0, 0, 1, 2) == 1

    def test_labels_match_statistics_oracle(self, rng):
        quads = random_quadruples(rng, 80, 6, 2, 8)
        index = FrequencyIndex(6)
        labels = []
        for t in range(int(quads[:, 3].max()) + 1):
            snap = quads[quads[:, 3] == t]
            if len(snap):
                labels.extend(index.event_label(s, r, o, t) for s, r, o, _ in snap)
            index.absorb(snap, t)
        flags = brute_new_flags(quads)
        assert np.array_equal(np.asarray(labels), (~flags).astype(int))

    def test_split_label_mean_complements_new_proportion(self, fixture_dataset):
        ds = fixture_dataset
        vocab = ds.vocab
        seq = ds.snapshot_sequence()
        stats = dataset_statistics(seq)
        index = FrequencyIndex(vocab.num_entities)
        labels = []
        for t in range(vocab.num_times):
            snap = seq.facts_at(t)
            if t >= int(ds.test[:, 3].min()) and len(snap):
                labels.extend(index.event_label(s, r, o, t) for s, r, o, _ in snap)
            # base facts only, mirroring how the statistics are defined
            index.absorb(snap, t)
        assert np.mean(labels) == pytest.approx(1.0 - stats.splits["test"].proportion)


class TestIndexCache:
    def test_round_trip(self, tmp_path, rng):
        quads = random_quadruples(rng, 150, 9, 3, 8)
        aug = augment_inverse(quads, build_vocabulary(quads))
        index = build_index(aug, 9)
        key = dataset_hash(aug)
        path = tmp_path / "index.bin"
        index.save(path, dataset_hash=key)
        loaded = FrequencyIndex.load(path, dataset_hash=key)
        assert loaded.frontier_time == index.frontier_time
        for _ in range(20):
            s, r = int(rng.integers(9)), int(rng.integers(6))
            t = int(rng.integers(loaded.frontier_time + 1))
            assert np.array_equal(loaded.frequency_vector(s, r, t),
                                  index.frequency_vector(s, r, t))

    def test_wrong_hash_rejected(self, tmp_path, rng):
        from amcen.errors import CheckpointError
        quads = random_quadruples(rng, 20, 4, 2, 3)
        index = build_index(quads, 4)
        path = tmp_path / "index.bin"
        index.save(path, dataset_hash="aaaa")
        with pytest.raises(CheckpointError, match="different dataset"):
            FrequencyIndex.load(path, dataset_hash="bbbb")
