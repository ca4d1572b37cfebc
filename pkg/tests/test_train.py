"""Training loop, evaluation, clustering and warp diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import completeness_score, homogeneity_score

from warpnet.data import Dataset, GenSpec, generate
from warpnet.experiments import synthetic_ttn
from warpnet.model import ClassifierConfig, Model, build_model
from warpnet.resample import Sequence, warp_sequence
from warpnet.train import (ConfigError, DivergenceError, RunHistory, TrainConfig,
                           accuracy_from_scores, clustering_metrics, contingency,
                           discriminative_warp_report, evaluate_accuracy, kmeans,
                           mean_warp_postprocess, purity_homogeneity_completeness,
                           sequence_distance, train)
from warpnet.ttn import TTNConfig, TTNOutput
from warpnet.warp import (ShapeError, WarpFunction, identity_warp, invert, random_warp,
                          validate)


@pytest.fixture(scope="module")
def small_data():
    return generate(GenSpec(kind="mixture_vs_gauss", T=40, train_count=400, test_count=200,
                            warp_roughness=1.0, seed=3))


def cfg(**kw):
    return TrainConfig(**{"iterations": 60, "eval_every": 20, **kw})


class TestConfig:
    def test_synthetic_protocol(self):
        c = TrainConfig()
        assert (c.optimizer, c.base_lr, c.iterations, c.ttn_lr_ratio) == ("adam", 1e-4, 1000, 0.1)

    def test_stepped_schedule(self):
        c = TrainConfig(optimizer="momentum", base_lr=1e-3, iterations=50000,
                        lr_schedule=[(35000, 0.1), (45000, 0.01)])
        assert [c.lr_multiplier(i) for i in (0, 34999, 35000, 44999, 45000, 49999)] == \
            [1.0, 1.0, 0.1, 0.1, 0.01, 0.01]

    @pytest.mark.parametrize("field, value", [("optimizer", "rmsprop"), ("base_lr", 0.0),
                                              ("ttn_lr_ratio", 1.5), ("iterations", 0),
                                              ("batch_size", -1)])
    def test_errors_name_field(self, field, value):
        with pytest.raises(ConfigError, match=field):
            TrainConfig(**{field: value})

    def test_history_monotone(self):
        h = RunHistory()
        h.record(10, 0.5, 0.9)
        with pytest.raises(ValueError):
            h.record(10, 0.4, 0.9)


class TestTraining:
    def test_deterministic(self, small_data, tmp_path):
        tr, te = small_data
        runs = []
        for _ in range(2):
            m = build_model(tr.T, tr.N, ttn=synthetic_ttn(tr.T), seed=5)
            m, h = train(m, tr, te, cfg(seed=5))
            runs.append((m, h))
        (m1, h1), (m2, h2) = runs
        assert h1 == h2
        assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)

    @pytest.mark.parametrize("classes", [2, 3])
    def test_first_loss_near_log_c(self, classes):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((300, 20, 1))
        y = np.arange(300) % classes
        ds = Dataset(X, y)
        m = build_model(20, 1, ClassifierConfig(num_classes=classes, fc_layers=[8]),
                        ttn=synthetic_ttn(20), seed=0)
        first = []
        train(m, ds, None, cfg(iterations=1, batch_size=30), first_loss=first)
        assert abs(first[0] - math.log(classes)) <= 0.05 * math.log(classes)

    def test_frozen_ttn_unchanged(self, small_data):
        tr, te = small_data
        m = build_model(tr.T, tr.N, ttn=synthetic_ttn(tr.T), seed=1)
        before = {k: v.copy() for k, v in m.params.items() if k.startswith("ttn.")}
        train(m, tr, te, cfg(ttn_lr_ratio=0.0))
        assert all(np.array_equal(before[k], m.params[k]) for k in before)

    @pytest.mark.parametrize("optimizer", ["adam", "momentum"])
    def test_frozen_identity_ttn_matches_baseline(self, small_data, optimizer):
        tr, te = small_data
        c = cfg(ttn_lr_ratio=0.0, optimizer=optimizer, base_lr=1e-3)
        base, _ = train(build_model(tr.T, tr.N, seed=9), tr, te, c)
        with_ttn, _ = train(build_model(tr.T, tr.N, ttn=synthetic_ttn(tr.T), seed=9), tr, te, c)
        for k in base.params:
            assert np.array_equal(base.params[k], with_ttn.params[k])
        assert np.array_equal(base.predict_logits(te.X), with_ttn.predict_logits(te.X))

    def test_learns(self, small_data):
        tr, te = small_data
        m, h = train(build_model(tr.T, tr.N, seed=0), tr, te, cfg(iterations=300, base_lr=1e-3))
        assert h.test_accuracy[-1] > 0.7  # well above chance after a short run
        assert h.iterations[-1] == 300

    def test_divergence_reports_iteration(self, small_data):
        tr, te = small_data
        m = build_model(tr.T, tr.N, seed=0)
        m.params["cls.out.w"][:] = np.nan
        with pytest.raises(DivergenceError) as info:
            train(m, tr, te, cfg())
        assert info.value.iteration == 1

    def test_shape_mismatch(self, small_data):
        tr, te = small_data
        with pytest.raises(ConfigError):
            train(build_model(tr.T + 1, 1), tr, te, cfg())


class TestModel:
    def test_architecture_round_trip(self):
        m = build_model(12, 2, ClassifierConfig(3, [(2, 3)], [4]), TTNConfig(12, 2), seed=4)
        back = Model.from_architecture(m.architecture(), m.params)
        X = np.random.default_rng(0).standard_normal((3, 12, 2))
        assert np.array_equal(back.predict_logits(X), m.predict_logits(X))

    def test_shape_mismatch(self):
        m = build_model(12, 2, ttn=TTNConfig(12, 2))
        params = dict(m.params)
        params["ttn.out.w"] = np.zeros((3, 3))
        with pytest.raises(ShapeError, match="ttn.out.w"):
            Model.from_architecture(m.architecture(), params)
        del params["ttn.out.w"]
        with pytest.raises(ShapeError, match="missing"):
            Model.from_architecture(m.architecture(), params)

    def test_shared_classifier_init(self):
        a = build_model(10, 1, ClassifierConfig(fc_layers=[4]), seed=2)
        b = build_model(10, 1, ClassifierConfig(fc_layers=[4]), TTNConfig(10), seed=2)
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


class TestAccuracy:
    def test_perfect(self):
        y = np.array([0, 1, 2, 1])
        assert accuracy_from_scores(np.eye(3)[y], y) == 1.0

    def test_constant_predictor(self):
        y = np.arange(10) % 2
        assert accuracy_from_scores(np.tile([1.0, 0.0], (10, 1)), y) == 0.5

    def test_hand_counted(self):
        y = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 2])
        pred = np.array([0, 1, 0, 1, 1, 2, 2, 2, 0, 2])  # 7 correct
        assert accuracy_from_scores(np.eye(3)[pred], y) == 0.7

    def test_ties_go_low(self):
        assert accuracy_from_scores(np.array([[0.5, 0.5]]), np.array([0])) == 1.0

    def test_evaluate_accuracy(self):
        m = build_model(5, 1, seed=0)
        ds = Dataset(np.zeros((4, 5, 1)), [0, 0, 1, 1])
        assert evaluate_accuracy(m, ds) == 0.5


class TestClustering:
    def test_ground_truth(self):
        y = np.array([0, 0, 1, 1, 2])
        assert purity_homogeneity_completeness(y, y) == (1.0, 1.0, 1.0)

    def test_single_cluster(self):
        y = np.array([0, 1] * 5)
        assert purity_homogeneity_completeness(y, np.zeros(10)) == (0.5, 0.0, 1.0)

    def test_hand_purity(self):
        assert purity_homogeneity_completeness([0, 0, 1, 1], [0, 0, 0, 1])[0] == 0.75

    @settings(max_examples=60)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=2, max_size=60))
    def test_matches_sklearn(self, pairs):
        y, c = map(np.array, zip(*pairs))
        _, h, comp = purity_homogeneity_completeness(y, c)
        assert math.isclose(h, homogeneity_score(y, c), abs_tol=1e-12)
        assert math.isclose(comp, completeness_score(y, c), abs_tol=1e-12)

    def test_contingency(self):
        t = contingency(np.array([0, 0, 1]), np.array([5, 7, 7]))
        assert t.tolist() == [[1, 1], [0, 1]]

    def test_separated_features(self):
        rng = np.random.default_rng(0)
        y = np.repeat([0, 1, 2], 20)
        feats = np.eye(3)[y] * 100 + 0.01 * rng.standard_normal((60, 3))
        assert clustering_metrics(feats, y, 3, runs=20) == (1.0, 1.0, 1.0)

    def test_kmeans_handles_empty_clusters(self):
        X = np.vstack([np.zeros((5, 2)), np.ones((5, 2)) * 10])
        assign = kmeans(X, 4, np.random.default_rng(0))
        assert assign.shape == (10,) and assign.max() < 4

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            clustering_metrics(np.zeros((3, 2)), np.zeros(3, int), 5)


class TestDistances:
    def test_self_distance(self):
        X = np.random.default_rng(0).standard_normal((5, 2))
        assert sequence_distance(X, X) == 0.0

    def test_metric_axioms(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b, c = rng.standard_normal((3, 6, 2))
            assert math.isclose(sequence_distance(a, b), sequence_distance(b, a))
            assert sequence_distance(a, c) <= sequence_distance(a, b) + sequence_distance(b, c)

    def test_three_four_five(self):
        assert sequence_distance(Sequence(np.zeros((2, 1))),
                                 Sequence(np.array([[3.0], [4.0]]))) == 5.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sequence_distance(np.zeros((3, 1)), np.zeros((4, 1)))


class TestWarpReport:
    def test_identity_model_no_change(self, small_data):
        _, te = small_data
        m = build_model(te.T, te.N, ttn=synthetic_ttn(te.T), seed=0)
        r = discriminative_warp_report(m, te, pairs_per_class=50)
        for s in list(r.intra.values()) + [r.inter]:
            assert s.mean_pre == s.mean_post

    def test_counts_add_up(self, small_data):
        _, te = small_data
        m = build_model(te.T, te.N, ttn=synthetic_ttn(te.T), seed=0)
        r = discriminative_warp_report(m, te, pairs_per_class=30)
        assert r.total_pairs == 30 * 3
        assert sum(s.pairs for s in r.intra.values()) + r.inter.pairs == r.total_pairs

    def test_trained_dataset2_pulls_classes_together(self):
        tr, te = generate(GenSpec(kind="nwave_vs_gauss", train_count=2000, test_count=400,
                                  seed=0))
        m = build_model(tr.T, tr.N, ttn=synthetic_ttn(tr.T), seed=0)
        train(m, tr, te, TrainConfig(iterations=1000, seed=0))
        r = discriminative_warp_report(m, te, pairs_per_class=200)
        pre = np.mean([s.mean_pre for s in r.intra.values()])
        post = np.mean([s.mean_post for s in r.intra.values()])
        assert post < pre


def _outputs(warps, T=20, N=2, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for w in warps:
        X = rng.standard_normal((T, N))
        out.append(TTNOutput(warp_sequence(Sequence(X), w), w, np.zeros(T)))
    return out


class TestMeanWarpPostprocess:
    def test_identity_bitwise(self):
        outs = _outputs([identity_warp(20)] * 3)
        for o, p in zip(outs, mean_warp_postprocess(outs)):
            assert np.array_equal(o.warped.frames, p.frames)

    def test_identical_warps_undo(self):
        rng = np.random.default_rng(0)
        T = 60
        w = random_warp(T, 0.2, rng)
        t = np.arange(T) / T
        X = np.stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)], axis=1)
        outs = [TTNOutput(warp_sequence(Sequence(X), w), w, np.zeros(T))] * 2
        back = mean_warp_postprocess(outs)[0].frames
        # the composed warp is within two grid units of the identity, so the
        # smooth signal moves by at most its slope times that distance
        slope = np.max(np.abs(np.diff(X, axis=0)))
        assert np.max(np.abs(back - X)) <= 2 * slope

    def test_single_output(self):
        w = random_warp(20, 1.0, np.random.default_rng(3))
        outs = _outputs([w])
        expected = warp_sequence(outs[0].warped, invert(w)).frames
        np.testing.assert_allclose(mean_warp_postprocess(outs)[0].frames, expected, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_warp_postprocess([])


def test_warp_function_from_model_is_valid(small_data):
    _, te = small_data
    m = build_model(te.T, te.N, ttn=synthetic_ttn(te.T), seed=0)
    m.params["ttn.out.w"] += 0.5 * np.random.default_rng(0).standard_normal(
        m.params["ttn.out.w"].shape)
    _, gamma, _ = m.warp(te.X)
    assert all(validate(WarpFunction(g)).valid for g in gamma)
