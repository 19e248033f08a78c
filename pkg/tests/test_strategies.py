import numpy as np
import pytest

from nnensemble.dataprep import Dataset
from nnensemble.nncore import PRESETS, forward
from nnensemble import strategies
from nnensemble.strategies import (
    CompositeSpec,
    CompositionError,
    EnsembleModel,
    StrategySpec,
    enumerate_level1,
    fraction_count,
    generate,
    parse_method,
    predict,
    recipe_for,
)

ARCH = PRESETS["M1"].with_(epochs=3)


class TestSpecs:
    def test_defaults(self):
        s = StrategySpec("bagging")
        assert (s.max_samples, s.max_features, s.dropout_rate, s.lam, s.cycle_len, s.stacker_lr) == \
            (0.7, 0.7, 0.2, 0.1, 10, 0.02)

    @pytest.mark.parametrize("kind,mode,integ", [
        ("random_subspace", "parallel", "simple_average"),
        ("pasting", "parallel", "simple_average"),
        ("snapshot", "stream", "simple_average"),
        ("ncl", "sequential", "simple_average"),
        ("dropout", "parallel", "simple_average"),
        ("bagging", "parallel", "simple_average"),
        ("stacking", "parallel", "weighted"),
    ])
    def test_generation_and_integration_modes(self, kind, mode, integ):
        s = StrategySpec(kind)
        assert s.mode == mode and s.integration == integ

    def test_composite_canonical(self):
        c = CompositeSpec(StrategySpec("snapshot"), StrategySpec("dropout"))
        assert c.id == "dropout-snapshot" and c.kinds == ("dropout", "snapshot")

    def test_composite_errors(self):
        with pytest.raises(CompositionError):
            CompositeSpec(StrategySpec("ncl"), StrategySpec("ncl"))
        with pytest.raises(CompositionError):
            CompositeSpec(StrategySpec("single"), StrategySpec("ncl"))

    def test_parse(self):
        assert parse_method("ncl-snapshot").id == "ncl-snapshot"
        assert parse_method("snapshot-ncl").id == "ncl-snapshot"
        with pytest.raises(ValueError):
            parse_method("boosting")

    def test_level1(self):
        pairs = enumerate_level1()
        ids = [p.id for p in pairs]
        assert len(pairs) == 21 and len(set(ids)) == 21
        assert "dropout-snapshot" in ids
        assert not any("single" in i or "simple_average" in i for i in ids)
        assert ids == sorted(ids)

    def test_fraction_count(self):
        assert fraction_count(0.7, 10) == 7
        assert fraction_count(0.7, 11) == 8
        assert fraction_count(0.7, 1) == 1


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 10))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1]
    return Dataset(X, (y - y.mean()) / y.std(), feature_names=[f"x{i}" for i in range(10)])


class TestGenerate:
    def test_bagging(self, data):
        m = generate(StrategySpec("bagging"), data, ARCH, 25, seed=1)
        assert m.size == 25 and m.integrator == "simple_average"
        assert all(np.array_equal(mask, np.arange(10)) for mask in m.feature_masks)

    def test_random_subspace_masks(self, data):
        m = generate(StrategySpec("random_subspace"), data, ARCH, 3, seed=1)
        assert [len(mask) for mask in m.feature_masks] == [7, 7, 7]
        assert all(len(set(mask)) == 7 and mask.max() < 10 for mask in m.feature_masks)

    def test_row_sampling(self, data, monkeypatch):
        seen = []
        real = strategies._sample_rows

        def spy(rng, n, recipe):
            rows = real(rng, n, recipe)
            seen.append(rows)
            return rows

        monkeypatch.setattr(strategies, "_sample_rows", spy)
        generate(StrategySpec("pasting"), data, ARCH, 4, seed=2)
        assert all(len(r) == 42 and len(set(r)) == 42 for r in seen)
        seen.clear()
        generate(StrategySpec("bagging"), data, ARCH, 4, seed=2)
        assert all(len(r) == 60 for r in seen) and any(len(set(r)) < 60 for r in seen)
        seen.clear()
        generate(parse_method("bagging-pasting"), data, ARCH, 4, seed=2)
        assert all(len(r) == 42 for r in seen) and any(len(set(r)) < 42 for r in seen)

    def test_snapshot_epochs_and_order(self, data, monkeypatch):
        epochs = []
        real = strategies.train

        def spy(net, X, y, config, loss=None, **kw):
            epochs.append(kw.get("epochs", config.epochs))
            return real(net, X, y, config, loss, **kw)

        monkeypatch.setattr(strategies, "train", spy)
        m = generate(StrategySpec("snapshot"), data, ARCH, 5, seed=3)
        assert sum(epochs) == 50 and m.size == 5
        # consecutive snapshots differ; copies are independent objects
        assert not np.array_equal(m.members[0].weights[0], m.members[-1].weights[0])
        assert len({id(n) for n in m.members}) == 5

    def test_snapshot_final_member_is_final_state(self, data):
        m1 = generate(StrategySpec("snapshot"), data, ARCH, 3, seed=4)
        m2 = generate(StrategySpec("snapshot"), data, ARCH, 4, seed=4)
        # the 4-snapshot run passes through the 3-snapshot run's final state
        assert np.array_equal(m1.members[-1].weights[0], m2.members[2].weights[0])

    def test_dropout_snapshot_composite(self, data, monkeypatch):
        calls = []
        real = strategies.train

        def spy(net, X, y, config, loss=None, **kw):
            calls.append((id(net), net.dropout_rate, kw.get("epochs")))
            return real(net, X, y, config, loss, **kw)

        monkeypatch.setattr(strategies, "train", spy)
        m = generate(parse_method("dropout-snapshot"), data, ARCH, 25, seed=5)
        assert m.size == 25
        assert len({c[0] for c in calls}) == 5  # five streams
        assert all(c[1] == 0.2 and c[2] == 10 for c in calls)
        assert len(calls) == 25

    def test_snapshot_composite_divisibility(self, data):
        with pytest.raises(CompositionError):
            generate(parse_method("bagging-snapshot"), data, ARCH, 7, seed=0)

    def test_snapshot_stacking_single_stream(self):
        assert recipe_for(parse_method("snapshot-stacking")).streams == 1
        assert recipe_for(parse_method("ncl-snapshot")).streams == 5

    def test_ncl_peers(self, data, monkeypatch):
        losses = []
        real = strategies.train

        def spy(net, X, y, config, loss=None, **kw):
            losses.append(loss)
            return real(net, X, y, config, loss, **kw)

        monkeypatch.setattr(strategies, "train", spy)
        generate(StrategySpec("ncl"), data, ARCH, 4, seed=6)
        assert [0 if l.peers is None else l.peers.shape[0] for l in losses] == [0, 1, 2, 3]
        assert all(l.kind == "ncl" and l.lam == 0.1 for l in losses)

    def test_ncl_snapshot_peers_are_stream_finals(self, data, monkeypatch):
        losses = []
        real = strategies.train

        def spy(net, X, y, config, loss=None, **kw):
            losses.append(loss)
            return real(net, X, y, config, loss, **kw)

        monkeypatch.setattr(strategies, "train", spy)
        generate(parse_method("ncl-snapshot"), data, ARCH, 10, seed=6)
        counts = [0 if l.peers is None else l.peers.shape[0] for l in losses]
        assert counts == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]

    def test_single(self, data):
        assert generate(StrategySpec("single"), data, ARCH, 25, seed=0).size == 1

    def test_deterministic(self, data):
        a = generate(parse_method("dropout-ncl"), data, ARCH, 3, seed=9)
        b = generate(parse_method("dropout-ncl"), data, ARCH, 3, seed=9)
        for na, nb in zip(a.members, b.members):
            assert all(np.array_equal(p, q) for p, q in zip(na.params(), nb.params()))

    @pytest.mark.parametrize("pair", [p.id for p in enumerate_level1()])
    def test_every_composite_trains(self, data, pair):
        m = generate(parse_method(pair), data, ARCH, 5, seed=1)
        ens, mem = predict(m, data.X)
        assert m.size == 5 and mem.shape == (5, 60) and np.all(np.isfinite(ens))
        assert (m.meta is not None) == ("stacking" in pair)


class TestPredict:
    def test_identical_members(self, data):
        m = generate(StrategySpec("single"), data, ARCH, 1, seed=0)
        twin = EnsembleModel([m.members[0]] * 3, [np.arange(10)] * 3, n_features=10)
        ens, mem = predict(twin, data.X)
        assert np.allclose(ens, mem[0], rtol=0, atol=1e-15)

    def test_mean_of_two(self, data):
        m = generate(StrategySpec("simple_average"), data, ARCH, 2, seed=0)
        for net, c in zip(m.members, (1.0, 3.0)):
            for w in net.weights:
                w[:] = 0
            net.biases[-1][:] = c
        ens, _ = predict(m, data.X[:1])
        assert ens[0] == 2.0

    def test_stacking_uses_meta_net(self, data):
        m = generate(StrategySpec("stacking"), data, ARCH, 4, seed=2)
        ens, mem = predict(m, data.X)
        manual = np.array([forward(m.meta, mem[:, j]) for j in range(mem.shape[1])])
        assert np.allclose(ens, manual, rtol=0, atol=1e-12)
        assert m.meta.weights[0].shape == (4, 4) and len(m.meta.weights) == 2

    def test_dimension_mismatch(self, data):
        m = generate(StrategySpec("random_subspace"), data, ARCH, 2, seed=0)
        with pytest.raises(ValueError):
            predict(m, data.X[:, :9])

    @pytest.mark.parametrize("kind", ["bagging", "pasting", "random_subspace", "dropout",
                                      "snapshot", "ncl", "simple_average"])
    def test_ambiguity_identity(self, data, kind):
        m = generate(StrategySpec(kind), data, ARCH, 5, seed=3)
        ens, mem = predict(m, data.X)
        ens_mse = np.mean((ens - data.y) ** 2)
        member_mse = np.mean((mem - data.y) ** 2)
        ambiguity = np.mean((mem - ens) ** 2)
        assert abs(ens_mse - (member_mse - ambiguity)) < 1e-9
        assert ens_mse <= member_mse + 1e-12
