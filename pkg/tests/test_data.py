import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amcen.data import (SnapshotSequence, TKGDataset, augment_inverse,
                        build_vocabulary, dataset_statistics, load_dataset,
                        load_quadruples, save_quadruples, split_snapshots)
from amcen.errors import DataError

from oracles import brute_new_flags, random_quadruples


def write_lines(path, lines):
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


class TestLoadQuadruples:
    def test_granularity_division(self, tmp_path):
        path = write_lines(tmp_path / "f.txt", ["0 0 1 0", "1 0 2 24", "2 0 3 48"])
        quads = load_quadruples(path, granularity=24)
        assert quads[:, 3].tolist() == [0, 1, 2]

    def test_empty_file(self, tmp_path):
        path = write_lines(tmp_path / "f.txt", [])
        assert load_quadruples(path).shape == (0, 4)

    def test_preserves_order_and_ignores_extra_columns(self, tmp_path):
        path = write_lines(tmp_path / "f.txt", ["5 1 2 7 999", "3 0 4 2 888 777"])
        quads = load_quadruples(path)
        assert quads.tolist() == [[5, 1, 2, 7], [3, 0, 4, 2]]

    def test_malformed_line_names_line_number(self, tmp_path):
        path = write_lines(tmp_path / "f.txt", ["0 0 1 0", "0 zero 1 4"])
        with pytest.raises(DataError, match=":2"):
            load_quadruples(path)
        path2 = write_lines(tmp_path / "g.txt", ["0 0 1 0", "1 2 3"])
        with pytest.raises(DataError, match=":2"):
            load_quadruples(path2)

    def test_negative_raw_time_rejected(self, tmp_path):
        path = write_lines(tmp_path / "f.txt", ["0 0 1 -5"])
        with pytest.raises(DataError, match="negative raw time"):
            load_quadruples(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_quadruples(tmp_path / "nope.txt")

    def test_round_trip(self, tmp_path, rng):
        quads = random_quadruples(rng, 50, 10, 3, 6)
        path = tmp_path / "rt.txt"
        save_quadruples(quads, path)
        reloaded = load_quadruples(path)
        assert np.array_equal(quads, reloaded)


class TestVocabulary:
    def test_single_quadruple(self):
        vocab = build_vocabulary(np.array([[0, 0, 1, 0]]))
        assert (vocab.num_entities, vocab.num_relations, vocab.num_times) == (2, 1, 1)

    def test_counts_match_set_scan(self, rng):
        quads = random_quadruples(rng, 100, 17, 5, 9)
        vocab = build_vocabulary(quads)
        # independent set-scan
        ents = {int(q[0]) for q in quads} | {int(q[2]) for q in quads}
        rels = {int(q[1]) for q in quads}
        times = {int(q[3]) for q in quads}
        assert vocab.num_entities == max(ents) + 1
        assert vocab.num_relations == max(rels) + 1
        assert vocab.num_times == max(times) + 1

    def test_empty_union_rejected(self):
        with pytest.raises(DataError):
            build_vocabulary(np.empty((0, 4), dtype=np.int64))


class TestAugmentInverse:
    def test_definition(self):
        quads = np.array([[0, 0, 1, 5]])
        vocab = build_vocabulary(quads)
        out = augment_inverse(quads, vocab)
        assert out.tolist() == [[0, 0, 1, 5], [1, 1, 0, 5]]

    def test_involution_on_relation_ids(self):
        base = 7
        for r in range(base):
            inv = r + base
            assert (inv - base if inv >= base else inv + base) == r

    def test_size_doubles_and_filter_recovers_input(self, rng):
        quads = random_quadruples(rng, 40, 9, 4, 5)
        vocab = build_vocabulary(quads)
        out = augment_inverse(quads, vocab)
        assert len(out) == 2 * len(quads)
        recovered = out[out[:, 1] < vocab.num_relations]
        assert np.array_equal(recovered, quads)

    def test_double_augmentation_rejected(self, rng):
        quads = random_quadruples(rng, 10, 5, 2, 3)
        vocab = build_vocabulary(quads)
        once = augment_inverse(quads, vocab)
        with pytest.raises(DataError, match="augment"):
            augment_inverse(once, vocab)


class TestSnapshots:
    def test_grouping(self):
        quads = np.array([[0, 0, 1, 0], [1, 0, 2, 0], [2, 0, 3, 2]])
        seq = split_snapshots(quads, build_vocabulary(quads))
        assert [len(s) for s in seq.snapshots] == [2, 0, 1]

    def test_partition_preserves_total(self, rng):
        quads = random_quadruples(rng, 200, 15, 4, 12)
        seq = split_snapshots(quads, build_vocabulary(quads))
        assert seq.total_facts() == len(quads)
        regrouped = np.concatenate([s for s in seq.snapshots if len(s)])
        assert sorted(map(tuple, regrouped)) == sorted(map(tuple, quads))


class TestStatistics:
    def test_all_unique_triples_are_new(self):
        quads = np.array([[i, 0, i + 1, t] for t, i in enumerate(range(6))])
        report = dataset_statistics(split_snapshots(quads, build_vocabulary(quads)))
        assert report.splits["all"].proportion == 1.0

    def test_matches_quadratic_oracle(self, rng):
        quads = random_quadruples(rng, 50, 5, 2, 6)
        seq = split_snapshots(quads, build_vocabulary(quads))
        report = dataset_statistics(seq)
        flags = brute_new_flags(quads)
        assert report.splits["all"].new_events == int(flags.sum())
        assert report.splits["all"].events == len(quads)

    def test_order_deterministic(self, rng):
        quads = random_quadruples(rng, 80, 6, 3, 7)
        seq = split_snapshots(quads, build_vocabulary(quads))
        r1 = dataset_statistics(seq)
        r2 = dataset_statistics(seq)
        assert r1.to_json() == r2.to_json()
        assert r1.per_timestamp == r2.per_timestamp

    def test_same_timestamp_duplicates_both_count_as_new(self):
        quads = np.array([[0, 0, 1, 0], [0, 0, 1, 0], [0, 0, 1, 1]])
        report = dataset_statistics(split_snapshots(quads, build_vocabulary(quads)))
        assert report.splits["all"].new_events == 2

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_agrees_with_oracle_on_random_streams(self, seed):
        rng = np.random.default_rng(seed)
        quads = random_quadruples(rng, 30, 4, 2, 5)
        report = dataset_statistics(split_snapshots(quads, build_vocabulary(quads)))
        assert report.splits["all"].new_events == int(brute_new_flags(quads).sum())

    def test_per_split_tallies(self, fixture_dataset):
        report = dataset_statistics(fixture_dataset.snapshot_sequence())
        expected_total = sum(len(fixture_dataset.split(n)) for n in ("train", "valid", "test"))
        total = sum(report.splits[n].events for n in ("train", "valid", "test"))
        assert total == report.splits["all"].events == expected_total
        for name in ("train", "valid", "test"):
            assert len(fixture_dataset.split(name)) == report.splits[name].events


class TestDatasetDirectory:
    def test_load_dataset_round_trip(self, tmp_path, fixture_dataset):
        from amcen.synthetic import write_dataset
        directory = write_dataset(fixture_dataset, tmp_path / "toy")
        ds = load_dataset(directory)
        assert np.array_equal(ds.train, fixture_dataset.train)
        assert ds.vocab == fixture_dataset.vocab

    def test_missing_split_file(self, tmp_path):
        (tmp_path / "broken").mkdir()
        with pytest.raises(DataError, match="missing split file"):
            load_dataset(tmp_path / "broken")

    def test_time_rebase(self):
        train = np.array([[0, 0, 1, 100]])
        valid = np.array([[0, 0, 1, 101]])
        test = np.array([[0, 0, 1, 102]])
        ds = TKGDataset.from_arrays(train, valid, test)
        assert ds.train[0, 3] == 0 and ds.test[0, 3] == 2

    def test_overlapping_split_times_rejected(self):
        train = np.array([[0, 0, 1, 0], [0, 0, 1, 5]])
        valid = np.array([[0, 0, 1, 5]])
        test = np.array([[0, 0, 1, 6]])
        with pytest.raises(DataError, match="overlaps"):
            TKGDataset.from_arrays(train, valid, test)

    def test_entity_name_maps(self, tmp_path, fixture_dataset):
        from amcen.synthetic import write_dataset
        directory = write_dataset(fixture_dataset, tmp_path / "named")
        (directory / "entity2id.txt").write_text(
            "".join(f"ent{i}\t{i}\n" for i in range(20)))
        ds = load_dataset(directory)
        assert ds.vocab.entity_names[3] == "ent3"
