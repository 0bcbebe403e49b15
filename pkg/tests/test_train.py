import json
from collections import Counter

import numpy as np
import pytest

from ramangeo.autodiff import set_debug
from ramangeo.fixtures import gaussian_peak_dataset
from ramangeo.model import ModelConfig
from ramangeo.model.convnext import ConfigError
from ramangeo.train import (
    EmptyDatasetError,
    OptimConfig,
    OptimizerError,
    OptimizerState,
    SplitError,
    TrainConfig,
    TrainingDivergedError,
    clip_grad_norm,
    cross_validate,
    evaluate,
    filter_rare_classes,
    history_jsonl,
    optimizer_step,
    stratified_kfold,
    stratified_split,
    train,
)

TINY = dict(depths=[1, 1, 1, 1], dims=[4, 8, 16, 32], drop_path_max=0.0)


def random_labels(rng, n_classes=None, lo=2, hi=30):
    n_classes = n_classes or int(rng.integers(2, 12))
    sizes = rng.integers(lo, hi, size=n_classes)
    labels = np.repeat(np.arange(n_classes), sizes)
    return rng.permutation(labels)


class TestFilterRare:
    def test_removes_singletons(self):
        kept, removed = filter_rare_classes(list("AAAAAB"))
        assert kept == list("AAAAA") and removed == {"B": 1}

    def test_boundary_inclusive(self):
        kept, removed = filter_rare_classes(list("AABB"))
        assert kept == list("AABB") and removed == {}

    def test_min_count_one_is_identity(self):
        items = list("ABCA")
        assert filter_rare_classes(items, min_count=1)[0] == items

    def test_key(self):
        rows = [{"c": "x"}, {"c": "y"}, {"c": "x"}]
        kept, _ = filter_rare_classes(rows, key=lambda r: r["c"])
        assert [r["c"] for r in kept] == ["x", "x"]

    def test_empty(self):
        with pytest.raises(EmptyDatasetError):
            filter_rare_classes(list("ABC"))


class TestStratifiedSplit:
    def test_single_class(self):
        tr, te = stratified_split([0] * 10, 0.2, seed=0)
        assert len(tr) == 8 and len(te) == 2

    def test_two_classes(self):
        labels = ["A"] * 5 + ["B"] * 5
        _, te = stratified_split(labels, 0.2, seed=1)
        assert sorted(labels[i] for i in te) == ["A", "B"]

    def test_seeds(self):
        labels = random_labels(np.random.default_rng(0))
        a = stratified_split(labels, 0.2, 5)
        b = stratified_split(labels, 0.2, 5)
        assert all(np.array_equal(u, v) for u, v in zip(a, b))
        ref = Counter(labels[a[1]])
        distinct = set()
        for seed in range(100):
            tr, te = stratified_split(labels, 0.2, seed)
            assert Counter(labels[te]) == ref
            distinct.add(te.tobytes())
        assert len(distinct) > 90

    def test_shares_and_partition(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            labels = random_labels(rng)
            tr, te = stratified_split(labels, 0.2, int(rng.integers(1 << 30)))
            assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(len(labels)))
            for c, n in Counter(labels).items():
                assert abs(np.sum(labels[te] == c) - 0.2 * n) <= 1

    def test_singleton_class_rejected(self):
        with pytest.raises(SplitError):
            stratified_split([0, 0, 0, 1], 0.2, 0)

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.1])
    def test_bad_fraction(self, f):
        with pytest.raises(SplitError):
            stratified_split([0, 0, 1, 1], f, 0)


class TestStratifiedKFold:
    def test_one_of_each_per_fold(self):
        fa = stratified_kfold(["A"] * 5 + ["B"] * 5, 5, seed=0)
        for k in range(5):
            assert sorted(fa.validation_indices(k) // 5) == [0, 1]

    def test_small_class_in_two_folds(self):
        labels = np.array([0] * 10 + [1] * 2)
        fa = stratified_kfold(labels, 5, seed=3)
        assert len(set(fa.folds[labels == 1])) == 2

    def test_counting_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            labels = random_labels(rng)
            k = int(rng.integers(2, 8))
            fa = stratified_kfold(labels, k, int(rng.integers(1 << 30)))
            assert fa.folds.min() >= 0 and fa.folds.max() < k
            seen = np.concatenate([fa.validation_indices(j) for j in range(k)])
            assert np.array_equal(np.sort(seen), np.arange(len(labels)))
            for c in np.unique(labels):
                per_fold = np.bincount(fa.folds[labels == c], minlength=k)
                assert per_fold.max() - per_fold.min() <= 1

    def test_deterministic(self):
        labels = random_labels(np.random.default_rng(4))
        assert np.array_equal(stratified_kfold(labels, 5, 9).folds, stratified_kfold(labels, 5, 9).folds)

    def test_k_too_small(self):
        with pytest.raises(SplitError):
            stratified_kfold([0, 0, 1, 1], 1, 0)


class TestClip:
    def test_unchanged_below(self):
        (g,) = clip_grad_norm([np.array([3.0, 4.0])], 10)
        np.testing.assert_array_equal(g, [3.0, 4.0])

    def test_exact_scaling(self):
        (g,) = clip_grad_norm([np.array([3.0, 4.0])], 1.0)
        np.testing.assert_allclose(g, [0.6, 0.8], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_flat_vector_oracle(self, seed):
        rng = np.random.default_rng(seed)
        grads = {f"p{i}": rng.normal(size=tuple(rng.integers(1, 6, size=rng.integers(1, 4)))) for i in range(6)}
        flat = np.concatenate([g.ravel() for g in grads.values()])
        max_norm = float(rng.uniform(0.1, 2.0) * np.linalg.norm(flat))
        out = clip_grad_norm(grads, max_norm)
        ref = flat * min(1.0, max_norm / np.linalg.norm(flat))
        got = np.concatenate([out[n].ravel() for n in grads])
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-9)
        assert np.linalg.norm(got) <= max_norm * (1 + 1e-6)

    def test_bad_max(self):
        with pytest.raises(ValueError):
            clip_grad_norm([np.ones(2)], 0.0)


def scalar_adamw_reference(theta, grads, lr, b1, b2, eps, wd):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat, vhat = m / (1 - b1**t), v / (1 - b2**t)
        theta = theta - lr * (mhat / (np.sqrt(vhat) + eps) + wd * theta)
        out.append(theta)
    return out


class TestOptimizer:
    def test_adamw_scalar_first_step(self):
        p = {"w": np.array([1.0])}
        st = OptimizerState("adamw").initialize(p)
        optimizer_step(st, p, {"w": np.array([1.0])}, OptimConfig("adamw", 1e-3, 0.0))
        assert p["w"][0] == pytest.approx(1 - 1e-3 / (1 + 1e-8), abs=1e-15)
        assert p["w"][0] == pytest.approx(0.999, abs=1e-9)

    def test_adamw_matches_scalar_reference(self):
        rng = np.random.default_rng(0)
        grads = rng.normal(size=50)
        cfg = OptimConfig("adamw", 1e-2, 0.1, (0.9, 0.99), 1e-8)
        p = {"w": np.array([0.7])}
        st = OptimizerState("adamw").initialize(p)
        got = []
        for g in grads:
            optimizer_step(st, p, {"w": np.array([g])}, cfg)
            got.append(p["w"][0])
        np.testing.assert_allclose(got, scalar_adamw_reference(0.7, grads, 1e-2, 0.9, 0.99, 1e-8, 0.1), atol=1e-12)

    def test_schedule_free_degenerates_to_adamw(self):
        rng = np.random.default_rng(1)
        theta0 = rng.normal(size=3)
        pa, ps = {"w": theta0.copy()}, {"w": theta0.copy()}
        ca = OptimConfig("adamw", 1e-2, 0.2, (0.0, 0.999), 1e-8)
        cs = OptimConfig("schedule_free_adamw", 1e-2, 0.2, (0.0, 0.999), 1e-8, average=False)
        sa, ss = OptimizerState("adamw").initialize(pa), OptimizerState("schedule_free_adamw").initialize(ps)
        for _ in range(100):
            # gradient of a quadratic, evaluated at each optimizer's current point
            optimizer_step(sa, pa, {"w": 2 * pa["w"] - 1}, ca)
            optimizer_step(ss, ps, {"w": 2 * ps["w"] - 1}, cs)
            np.testing.assert_allclose(ss.z["w"], pa["w"], rtol=0, atol=1e-9)

    def test_pure_decay_shrinks(self):
        p = {"w": np.array([2.0, -3.0])}
        st = OptimizerState("schedule_free_adamw").initialize(p)
        prev = np.abs(p["w"]).copy()
        for _ in range(20):
            optimizer_step(st, p, {"w": np.zeros(2)}, OptimConfig(weight_decay=0.5, learning_rate=0.1))
            assert np.all(np.abs(p["w"]) < prev)
            prev = np.abs(p["w"]).copy()

    def test_decay_direction_independent_of_moments(self):
        rng = np.random.default_rng(2)
        p = {"w": rng.normal(size=5)}
        st = OptimizerState("schedule_free_adamw").initialize(p)
        cfg = OptimConfig(weight_decay=0.3, learning_rate=0.05)
        for _ in range(5):
            optimizer_step(st, p, {"w": rng.normal(size=5)}, cfg)
        z_before, y = st.z["w"].copy(), p["w"].copy()
        optimizer_step(st, p, {"w": np.zeros(5)}, cfg)
        np.testing.assert_allclose(st.z["w"] - z_before, -0.05 * 0.3 * y, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("kind", ["adamw", "schedule_free_adamw"])
    def test_zero_grad_zero_decay_is_noop(self, kind):
        p = {"w": np.array([0.3, -1.2])}
        st = OptimizerState(kind).initialize(p)
        for _ in range(3):
            optimizer_step(st, p, {"w": np.zeros(2)}, OptimConfig(kind, weight_decay=0.0))
        np.testing.assert_array_equal(p["w"], [0.3, -1.2])

    def test_averaged_iterate_is_mean_of_z(self):
        rng = np.random.default_rng(3)
        p = {"w": rng.normal(size=4)}
        st = OptimizerState("schedule_free_adamw").initialize(p)
        zs = []
        for _ in range(30):
            optimizer_step(st, p, {"w": rng.normal(size=4)}, OptimConfig(learning_rate=0.01))
            zs.append(st.z["w"].copy())
        np.testing.assert_allclose(st.x["w"], np.mean(zs, axis=0), atol=1e-12)
        np.testing.assert_allclose(p["w"], 0.1 * st.z["w"] + 0.9 * st.x["w"], atol=1e-15)

    def test_decay_mask(self):
        p = {"a": np.ones(2), "b": np.ones(2)}
        st = OptimizerState("adamw").initialize(p)
        optimizer_step(st, p, {"a": np.zeros(2), "b": np.zeros(2)}, OptimConfig("adamw", 0.1, 0.5), {"a": True, "b": False})
        assert p["a"][0] < 1 and p["b"][0] == 1

    def test_errors(self):
        p = {"w": np.zeros(2)}
        with pytest.raises(OptimizerError):
            optimizer_step(OptimizerState("adamw"), p, {"w": np.zeros(2)}, OptimConfig("adamw"))
        st = OptimizerState("adamw").initialize(p)
        with pytest.raises(OptimizerError):
            optimizer_step(st, p, {"w": np.zeros(3)}, OptimConfig("adamw"))
        with pytest.raises(OptimizerError):
            OptimizerState("sgd")

    def test_step_counter_increases(self):
        p = {"w": np.zeros(1)}
        st = OptimizerState("schedule_free_adamw").initialize(p)
        steps = []
        for _ in range(4):
            optimizer_step(st, p, {"w": np.ones(1)}, OptimConfig())
            steps.append(st.step)
        assert steps == [1, 2, 3, 4]


@pytest.fixture(scope="module")
def small_data():
    X, y, labels = gaussian_peak_dataset(n_samples=32, grid_size=128, seed=1)
    return X, y, labels


def tiny_config(G=128, **kw):
    return ModelConfig(num_classes=4, input_length=G, **{**TINY, **kw})


class TestTrain:
    def test_learns_separable_fixture(self, small_data):
        X, y, labels = small_data
        cfg = TrainConfig(epochs=120, batch_size=8, learning_rate=4e-3, weight_decay=0.05, dtype="float64")
        res = train(tiny_config(), cfg, X, y, labels)
        assert evaluate(res.model, X, y).accuracy(y) == 1.0
        losses = [r["train_loss"] for r in res.history]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_zero_lr_keeps_parameters(self, small_data):
        X, y, labels = small_data
        cfg = TrainConfig(epochs=3, batch_size=8, learning_rate=0.0, dtype="float64")
        res = train(tiny_config(), cfg, X, y, labels)
        ref = train(tiny_config(), TrainConfig(epochs=0, dtype="float64"), X, y, labels)
        for n, t in res.model.params.items():
            assert t.data.tobytes() == ref.model.params[n].data.tobytes()
        losses = [r["train_loss"] for r in res.history]
        assert max(losses) - min(losses) < 1e-12

    def test_bit_identical_history(self, small_data):
        X, y, labels = small_data
        cfg = TrainConfig(epochs=4, batch_size=8, dtype="float64", record_wall_time=False)
        val = (X[:8], y[:8])
        a = train(tiny_config(drop_path_max=0.1), cfg, X, y, labels, validation=val)
        b = train(tiny_config(drop_path_max=0.1), cfg, X, y, labels, validation=val)
        assert history_jsonl(a.history) == history_jsonl(b.history)
        assert set(json.loads(history_jsonl(a.history).splitlines()[0])) == {
            "fold", "epoch", "train_loss", "val_loss", "val_accuracy", "wall_ms",
        }

    def test_final_model_uses_average(self, small_data):
        X, y, labels = small_data
        res = train(tiny_config(), TrainConfig(epochs=2, batch_size=8, dtype="float64"), X, y, labels)
        for n, t in res.model.params.items():
            np.testing.assert_array_equal(t.data, res.state.x[n])

    def test_nan_aborts(self, small_data):
        X, y, labels = small_data
        bad = X.copy()
        bad[3, 5] = np.nan
        with pytest.raises(TrainingDivergedError) as info:
            train(tiny_config(), TrainConfig(epochs=1, batch_size=64, dtype="float64"), bad, y, labels)
        d = info.value.diagnostics()
        assert d["epoch"] == 0 and d["batch"] == 0 and "head.fc.weight" in d["param_norms"]

    def test_clip_postcondition_in_debug(self, small_data):
        X, y, labels = small_data
        set_debug(True)
        try:
            train(tiny_config(), TrainConfig(epochs=1, batch_size=8, clip_norm=1e-3, dtype="float64"), X, y, labels)
        finally:
            set_debug(False)

    def test_grid_mismatch(self, small_data):
        X, y, labels = small_data
        with pytest.raises(ConfigError):
            train(tiny_config(G=256), TrainConfig(epochs=1), X, y, labels)

    @pytest.mark.parametrize(
        "kw", [{"learning_rate": -1}, {"folds": 1}, {"holdout_fraction": 1.0}, {"optimizer": "sgd"}, {"dtype": "f16"}]
    )
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw).validate()

    def test_config_round_trip(self):
        cfg = TrainConfig(epochs=7, betas=(0.8, 0.99))
        assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"lr": 1})


def test_cross_validate_covers_every_sample(small_data):
    X, y, labels = small_data
    cfg = TrainConfig(epochs=2, batch_size=16, folds=2, dtype="float64", record_wall_time=False)
    cv = cross_validate(tiny_config(), cfg, X, y, labels)
    assert len(cv.reports) == 2 and cv.aggregate.n_folds == 2
    assert sum(r.total for r in cv.reports) == len(y)
    assert sorted(np.concatenate([cv.assignment.validation_indices(k) for k in range(2)])) == list(range(len(y)))
    assert [r.history[0]["fold"] for r in cv.results] == [0, 1]
