"""Domain types, CSV/FSET ingestion, normalization, grouping."""

import math

import numpy as np
import pytest

from transfer_bench.data import (
    FeatureSet,
    GroupedSeries,
    TransferTuple,
    TupleTable,
    group_by_dataset,
    load_features,
    load_tuples,
    save_features,
    save_tuples,
    z_normalize,
)
from transfer_bench.errors import (
    FormatError,
    NormalizationError,
    ParseError,
    ValidationError,
)

HEADER = "dataset,architecture,scorer,score,metric\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def make_table(n_datasets=11, n_arch=10, scorer="s1", seed=0, with_metric=True):
    rng = np.random.default_rng(seed)
    tuples = []
    for d in range(n_datasets):
        for a in range(n_arch):
            metric = float(rng.uniform(0.2, 0.9)) if with_metric else None
            tuples.append(
                TransferTuple(f"arch{a}", f"data{d}", scorer, float(rng.normal()), metric)
            )
    return TupleTable(tuple(tuples))


class TestLoadTuples:
    def test_110_row_csv(self, tmp_path):
        rng = np.random.default_rng(1)
        lines = [HEADER]
        for d in range(11):
            for a in range(10):
                lines.append(f"data{d},arch{a},nscore,{rng.normal()},{rng.uniform(0, 1)}\n")
        path = write(tmp_path / "t.csv", "".join(lines))
        table = load_tuples(path)
        assert len(table) == 110
        assert len(table.datasets) == 11
        assert table.scorers == ("nscore",)

    def test_empty_file_with_header(self, tmp_path):
        path = write(tmp_path / "t.csv", HEADER)
        assert len(load_tuples(path)) == 0

    def test_metric_out_of_range(self, tmp_path):
        path = write(tmp_path / "t.csv", HEADER + "d,a,s,0.5,1.2\n")
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            load_tuples(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = write(tmp_path / "t.csv", HEADER + "d,a,s,0.5,0.5\nd2,a,s,oops,\n")
        with pytest.raises(ParseError, match="line 3"):
            load_tuples(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = write(tmp_path / "t.csv", HEADER + "d,a,s,0.5,\nd,a,s,0.7,\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_tuples(path)

    def test_bad_header(self, tmp_path):
        path = write(tmp_path / "t.csv", "dataset,arch,scorer,score,metric\nd,a,s,1,\n")
        with pytest.raises(ParseError, match="header"):
            load_tuples(path)

    def test_empty_metric_cell_means_absent(self, tmp_path):
        path = write(tmp_path / "t.csv", HEADER + "d,a,s,0.25,\n")
        table = load_tuples(path)
        assert table.tuples[0].metric is None

    def test_round_trip(self, tmp_path):
        table = make_table(n_datasets=3, n_arch=4)
        tuples = list(table.tuples)
        tuples[0] = TransferTuple("arch0", "data0", "s1", 1 / 3, None)
        table = TupleTable(tuple(tuples))
        path = tmp_path / "rt.csv"
        save_tuples(table, path)
        again = load_tuples(path)
        assert again.tuples == table.tuples
        save_tuples(again, tmp_path / "rt2.csv")
        assert (tmp_path / "rt.csv").read_bytes() == (tmp_path / "rt2.csv").read_bytes()


class TestFeatureFiles:
    def test_fset_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        probs = rng.dirichlet(np.ones(3), size=6)
        fs = FeatureSet(rng.normal(size=(6, 4)), np.array([0, 1, 0, 1, 2, 2]), probs)
        path = tmp_path / "x.fset"
        save_features(fs, path)
        again = load_features(path)
        np.testing.assert_array_equal(again.features, fs.features)
        np.testing.assert_array_equal(again.labels, fs.labels)
        np.testing.assert_array_equal(again.source_probs, fs.source_probs)

    def test_fset_minimal_header_case(self, tmp_path):
        fs = FeatureSet(np.arange(8.0).reshape(4, 2), np.array([0, 1, 0, 1]))
        path = tmp_path / "m.fset"
        save_features(fs, path)
        again = load_features(path)
        assert again.features.shape == (4, 2)
        assert again.source_probs is None

    def test_truncated_payload(self, tmp_path):
        fs = FeatureSet(np.arange(8.0).reshape(4, 2), np.array([0, 1, 0, 1]))
        path = tmp_path / "t.fset"
        save_features(fs, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(FormatError, match="expected"):
            load_features(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.fset"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ParseError):
            # non-FSET magic falls back to the CSV reader, which rejects it
            load_features(path)

    def test_csv_fallback(self, tmp_path):
        path = write(
            tmp_path / "f.csv",
            "f0,f1,label\n0.0,1.0,cat\n2.0,3.0,dog\n4.0,5.0,cat\n",
        )
        fs = load_features(path)
        assert fs.features.shape == (3, 2)
        assert fs.n_classes == 2
        assert fs.label_names == ("cat", "dog")
        np.testing.assert_array_equal(fs.labels, [0, 1, 0])

    def test_csv_fallback_with_probs(self, tmp_path):
        path = write(
            tmp_path / "f.csv",
            "f0,label,p0,p1\n0.0,x,0.25,0.75\n1.0,y,0.5,0.5\n",
        )
        fs = load_features(path)
        assert fs.source_probs.shape == (2, 2)

    def test_non_stochastic_probs(self, tmp_path):
        path = write(tmp_path / "f.csv", "f0,label,p0,p1\n0.0,x,0.2,0.75\n1.0,y,0.5,0.5\n")
        with pytest.raises(ValidationError, match="sums"):
            load_features(path)

    def test_labels_densified(self):
        fs = FeatureSet(np.zeros((3, 1)), np.array([5, 9, 5]))
        np.testing.assert_array_equal(fs.labels, [0, 1, 0])
        assert fs.label_names == ("5", "9")


class TestZNormalize:
    def test_hand_computed_group(self):
        # population sd of [1,2,3] is sqrt(2/3)
        table = TupleTable(
            tuple(
                TransferTuple(f"a{i}", "d", "s", float(v), None)
                for i, v in enumerate([1.0, 2.0, 3.0])
            )
        )
        norm = z_normalize(table)
        got = [t.score for t in norm]
        expect = [-1.0 / math.sqrt(2.0 / 3.0), 0.0, 1.0 / math.sqrt(2.0 / 3.0)]
        np.testing.assert_allclose(got, expect, atol=1e-12)
        stats = norm.norm_stats[("s", "d")]
        assert stats.score_mean == 2.0
        assert abs(stats.score_sd - math.sqrt(2.0 / 3.0)) < 1e-15

    def test_zero_variance_group(self):
        table = TupleTable(
            tuple(TransferTuple(f"a{i}", "d", "s", 5.0, None) for i in range(3))
        )
        with pytest.raises(NormalizationError, match="zero score variance"):
            z_normalize(table)

    def test_idempotent(self):
        table = make_table(n_datasets=4, n_arch=6, seed=3)
        once = z_normalize(table)
        twice = z_normalize(once)
        for a, b in zip(once, twice):
            assert abs(a.score - b.score) < 1e-12
            assert abs(a.metric - b.metric) < 1e-12

    def test_metrics_normalized_too(self):
        table = make_table(n_datasets=2, n_arch=5, seed=4)
        norm = z_normalize(table)
        for (scorer, dataset), members in norm.groups().items():
            vals = np.array([t.metric for t in members])
            assert abs(vals.mean()) < 1e-12
            assert abs(vals.std() - 1.0) < 1e-12

    def test_mixed_metric_presence_rejected(self):
        tuples = (
            TransferTuple("a0", "d", "s", 0.1, 0.5),
            TransferTuple("a1", "d", "s", 0.2, None),
        )
        with pytest.raises(ValidationError, match="mixes"):
            z_normalize(TupleTable(tuples))

    def test_rank_order_preserved(self):
        from transfer_bench.ranking import kendall_tau

        table = make_table(n_datasets=1, n_arch=8, seed=5)
        norm = z_normalize(table)
        raw = group_by_dataset(table, "s1")
        nrm = group_by_dataset(norm, "s1")
        t_raw = kendall_tau(raw.groups[0][1], raw.groups[0][2])
        t_nrm = kendall_tau(nrm.groups[0][1], nrm.groups[0][2])
        assert t_raw.value == t_nrm.value


class TestGroupByDataset:
    def test_eleven_groups_of_ten(self):
        table = make_table()
        series = group_by_dataset(table, "s1")
        assert len(series) == 11
        assert all(x.size == 10 for _, x, _ in series)

    def test_single_dataset(self):
        table = make_table(n_datasets=1)
        assert len(group_by_dataset(table, "s1")) == 1

    def test_unknown_scorer(self):
        with pytest.raises(ValidationError, match="absent|not present"):
            group_by_dataset(make_table(), "nope")

    def test_missing_metric(self):
        table = make_table(n_datasets=2, with_metric=False)
        with pytest.raises(ValidationError, match="without metrics"):
            group_by_dataset(table, "s1")


class TestInvariants:
    def test_duplicate_tuple_key(self):
        tuples = (
            TransferTuple("a", "d", "s", 0.1, None),
            TransferTuple("a", "d", "s", 0.2, None),
        )
        with pytest.raises(ValidationError, match="duplicate"):
            TupleTable(tuples)

    def test_grouped_series_shape_checks(self):
        with pytest.raises(ValidationError, match="fewer than 2"):
            GroupedSeries((("d", np.array([1.0]), np.array([1.0])),))
        with pytest.raises(ValidationError, match="equal length"):
            GroupedSeries((("d", np.array([1.0, 2.0]), np.array([1.0])),))

    def test_feature_set_probs_negative(self):
        with pytest.raises(ValidationError, match=">= 0"):
            FeatureSet(
                np.zeros((2, 1)),
                np.array([0, 1]),
                np.array([[1.5, -0.5], [0.5, 0.5]]),
            )
