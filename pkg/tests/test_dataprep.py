import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nnensemble.dataprep import (
    DataError,
    EmptyDatasetError,
    RawTable,
    friedman1_target,
    kfold,
    load_csv,
    loo_encode,
    preprocess,
    read_manifest,
    synth_friedman1,
    synth_linear,
    table_from_arrays,
    write_csv,
)


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_typing(self, tmp_path):
        p = write(tmp_path, "a,c,y\n1,2,3\n4,x,5\n6,7,8\n")
        t = load_csv(p, "y")
        assert t.kinds == {"a": "numeric", "c": "categorical"}
        assert list(t.target) == [3, 5, 8]

    def test_missing_target_cell(self, tmp_path):
        p = write(tmp_path, "a,y\n1,2\n3,NA\n")
        with pytest.raises(DataError, match="missing"):
            load_csv(p, "y")

    def test_missing_target_column(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(write(tmp_path, "a,b\n1,2\n"), "y")

    def test_ragged(self, tmp_path):
        with pytest.raises(DataError, match="ragged"):
            load_csv(write(tmp_path, "a,y\n1,2\n3\n"), "y")

    def test_unreadable(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv", "y")

    def test_missing_markers(self, tmp_path):
        t = load_csv(write(tmp_path, "a,b,y\n1,?,1\n2,3,2\n"), "y", missing_markers=("?",))
        assert t.kinds["b"] == "numeric" and t.has_missing("b") and not t.has_missing("a")

    def test_round_trip(self, tmp_path):
        ds = synth_friedman1(40, 1.0, seed=5)
        p = tmp_path / "rt.csv"
        write_csv(ds, p)
        t = load_csv(p, "target")
        X = np.column_stack([t.columns[n] for n in t.names])
        assert t.names == ds.feature_names
        assert np.array_equal(X, ds.X) and np.array_equal(t.target, ds.y)


def cat_table(cats, target):
    cats = np.array(cats, dtype=object)
    return RawTable(["c"], {"c": "categorical"}, {"c": cats}, np.asarray(target, dtype=float))


class TestLooEncode:
    def test_leave_one_out_means(self):
        t = cat_table(["A", "A", "B", "B", "B"], [1, 3, 0, 0, 6])
        enc = loo_encode(t, t.target, np.arange(5)).columns["c"]
        assert list(enc[:2]) == [3.0, 1.0]
        assert list(enc[2:]) == [3.0, 3.0, 0.0]

    def test_single_occurrence_uses_global_mean(self):
        t = cat_table(["A", "B", "B"], [0.0, 3.0, 3.0])
        enc = loo_encode(t, t.target, np.arange(3)).columns["c"]
        assert enc[0] == 2.0

    def test_unseen_test_category(self):
        t = cat_table(["A", "A", "B", "Z"], [1.0, 3.0, 2.0, 100.0])
        enc = loo_encode(t, t.target, np.arange(3)).columns["c"]
        assert enc[3] == 2.0

    def test_test_row_gets_full_training_mean(self):
        t = cat_table(["A", "A", "A"], [1.0, 3.0, 50.0])
        enc = loo_encode(t, t.target, np.array([0, 1])).columns["c"]
        assert enc[2] == 2.0


class TestPreprocess:
    def test_drops_constant_and_incomplete(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(100, 3))
        X[:, 1] = 4.0
        X[17, 2] = np.nan
        ds = preprocess(table_from_arrays(X, rng.normal(size=100)))
        assert ds.feature_names == ["x1"]

    def test_zscore_on_training_rows(self):
        rng = np.random.default_rng(1)
        table = table_from_arrays(rng.normal(3, 5, size=(90, 4)), rng.normal(size=90))
        train = np.arange(60)
        ds = preprocess(table, train)
        assert np.allclose(ds.X[train].mean(axis=0), 0, atol=1e-9)
        assert np.allclose(ds.X[train].std(axis=0), 1, atol=1e-9)
        assert abs(ds.y[train].mean()) < 1e-9 and abs(ds.y[train].std() - 1) < 1e-9

    def test_categorical_pipeline(self, tmp_path):
        p = write(tmp_path, "c,x,y\nA,1,1\nA,2,3\nB,3,0\nB,5,6\nB,4,0\n")
        ds = preprocess(load_csv(p, "y"))
        assert ds.feature_names == ["c", "x"] and np.all(np.isfinite(ds.X))

    def test_all_dropped(self):
        X = np.ones((20, 2))
        with pytest.raises(EmptyDatasetError):
            preprocess(table_from_arrays(X, np.arange(20.0)))

    def test_idempotent(self):
        ds = synth_linear(80, 5, 0.3, seed=2)
        again = preprocess(table_from_arrays(ds.X, ds.y, ds.feature_names))
        assert np.allclose(again.X, ds.X, atol=1e-9) and np.allclose(again.y, ds.y, atol=1e-9)

    def test_no_leak_from_test_targets(self):
        rng = np.random.default_rng(3)
        cats = rng.choice(list("abcd"), size=60).astype(object)
        num = rng.normal(size=60)
        y = rng.normal(size=60)
        train = np.arange(40)
        t1 = RawTable(["c", "x"], {"c": "categorical", "x": "numeric"}, {"c": cats, "x": num}, y)
        y2 = y.copy()
        y2[40:] = rng.permutation(y2[40:]) * 7 + 3
        t2 = RawTable(["c", "x"], {"c": "categorical", "x": "numeric"}, {"c": cats, "x": num}, y2)
        a, b = preprocess(t1, train), preprocess(t2, train)
        assert np.array_equal(a.X[train], b.X[train]) and np.array_equal(a.y[train], b.y[train])
        # test-row features are also target-free
        assert np.array_equal(a.X, b.X)


class TestKfold:
    def test_even(self):
        assert sorted(np.bincount(kfold(6, 3, 1).assignment)) == [2, 2, 2]

    def test_remainder(self):
        assert sorted(np.bincount(kfold(7, 3, 5).assignment)) == [2, 2, 3]

    def test_deterministic(self):
        assert np.array_equal(kfold(50, 3, 42).assignment, kfold(50, 3, 42).assignment)

    def test_errors(self):
        with pytest.raises(ValueError):
            kfold(2, 3, 0)
        with pytest.raises(ValueError):
            kfold(10, 1, 0)

    @given(n=st.integers(2, 300), k=st.integers(2, 10), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_partition(self, n, k, seed):
        assume(n >= k)
        split = kfold(n, k, seed)
        sizes = np.bincount(split.assignment, minlength=k)
        assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
        rows = np.concatenate([split.test_rows(f) for f in range(k)])
        assert sorted(rows) == list(range(n))


class TestSynthetic:
    def test_friedman1_closed_form(self):
        x = np.full((1, 10), 0.5)
        # 10 sin(pi/4) + 20 * 0 + 10 * 0.5 + 5 * 0.5
        assert friedman1_target(x)[0] == pytest.approx(14.571067811865476, abs=1e-12)

    def test_same_seed(self):
        a, b = synth_friedman1(50, 1.0, 9), synth_friedman1(50, 1.0, 9)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_linear_noise_free_is_exact(self):
        ds = synth_linear(60, 4, 0.0, seed=1)
        A = np.column_stack([ds.X, np.ones(ds.n)])
        coef, *_ = np.linalg.lstsq(A, ds.y, rcond=None)
        assert np.mean((A @ coef - ds.y) ** 2) < 1e-20

    def test_min_size(self):
        with pytest.raises(ValueError):
            synth_friedman1(5)


def test_manifest(tmp_path):
    (tmp_path / "m.txt").write_text("# datasets\nsub/a.csv, price\n/abs/b.csv,y,?|NA\n\n")
    entries = read_manifest(tmp_path / "m.txt")
    assert entries[0].path == str(tmp_path / "sub" / "a.csv") and entries[0].target == "price"
    assert entries[1].missing == ("?", "NA") and entries[1].name == "b"
    assert len(entries) == 2
