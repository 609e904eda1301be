"""Encapsulated classifiers: training, prediction, flipping, serialization."""

import math

import numpy as np
import pytest

from cobra.core import ADVISOR, TARGET, AgentId, EvidenceRecord, ContextVector, EvidenceStore
from cobra.encap import (
    KindPolicy,
    ModelFormatError,
    build_repository,
    deserialize_model,
    flip_model,
    serialize_model,
    train_decision_tree,
    train_gaussian_nb,
)

U = AgentId("u", ADVISOR)
Z = AgentId("z", TARGET)


def _brute_force_best_gini_gain(X, y, min_leaf=2):
    """Exhaustive split search oracle, independent of the tree code."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m = len(y)

    def gini(labels):
        if len(labels) == 0:
            return 0.0
        p = labels.mean()
        return 1.0 - p * p - (1.0 - p) * (1.0 - p)

    parent = gini(y)
    best = 0.0
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2.0
            mask = X[:, f] <= thr
            if mask.sum() < min_leaf or (~mask).sum() < min_leaf:
                continue
            child = (mask.sum() * gini(y[mask]) + (~mask).sum() * gini(y[~mask])) / m
            best = max(best, parent - child)
    return best


class TestDecisionTree:
    def test_perfectly_separable(self):
        recs = [([0.0], 1)] * 5 + [([1.0], 0)] * 5
        model = train_decision_tree(recs, U, Z)
        assert model.predict([0.0]) == 1.0
        assert model.predict([1.0]) == 0.0

    def test_pure_dataset_is_a_constant(self):
        model = train_decision_tree([([0.3], 1), ([0.9], 1), ([0.1], 1)], U, Z)
        rng = np.random.default_rng(0)
        assert (model.predict_batch(rng.uniform(-5, 5, (50, 1))) == 1.0).all()

    def test_no_gain_split_leaves_root_leaf(self):
        # brute force confirms no split improves Gini, so the root holds 0.5
        recs = [([0.0], 1), ([0.0], 0), ([1.0], 1), ([1.0], 0)]
        X = [r[0] for r in recs]
        y = [r[1] for r in recs]
        assert _brute_force_best_gini_gain(X, y) == 0.0
        model = train_decision_tree(recs, U, Z)
        assert model.n_nodes == 1
        assert model.predict([0.0]) == 0.5
        assert model.predict([17.0]) == 0.5

    def test_empty_records_error(self):
        with pytest.raises(ValueError):
            train_decision_tree([], U, Z)

    def test_constant_features_become_leaf(self):
        recs = [([1.0, 2.0], 0), ([1.0, 2.0], 1), ([1.0, 2.0], 1)]
        model = train_decision_tree(recs, U, Z)
        assert model.n_nodes == 1
        assert model.predict([1.0, 2.0]) == pytest.approx(2.0 / 3.0)

    def test_order_invariance(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, (80, 3))
        y = (X[:, 0] + 0.3 * X[:, 2] > 0).astype(int)
        y[::9] = 1 - y[::9]  # label noise so the tree is non-trivial
        recs = [(X[i], int(y[i])) for i in range(len(y))]
        base = train_decision_tree(recs, U, Z)
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(len(recs))
            model = train_decision_tree([recs[i] for i in perm], U, Z)
            np.testing.assert_array_equal(model.feature, base.feature)
            np.testing.assert_array_equal(model.threshold, base.threshold)
            np.testing.assert_array_equal(model.value, base.value)

    def test_predictions_stay_in_unit_interval(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-2, 2, (120, 4))
        y = (rng.random(120) < 0.4).astype(int)
        model = train_decision_tree([(X[i], int(y[i])) for i in range(120)], U, Z)
        p = model.predict_batch(rng.uniform(-3, 3, (1000, 4)))
        assert (p >= 0.0).all() and (p <= 1.0).all()

    def test_dimension_mismatch(self):
        model = train_decision_tree([([0.0, 1.0], 1)], U, Z)
        with pytest.raises(ValueError):
            model.predict([0.0])


class TestGaussianNB:
    def test_symmetric_classes_give_half(self):
        recs = [([-1.0], 0)] * 5 + [([1.0], 1)] * 5
        model = train_gaussian_nb(recs, U, Z)
        assert model.predict([0.0]) == pytest.approx(0.5, abs=1e-12)

    def test_single_class_is_constant(self):
        model = train_gaussian_nb([([0.1], 1), ([0.5], 1)], U, Z)
        assert model.predict([-3.0]) == 1.0
        model0 = train_gaussian_nb([([0.1], 0), ([0.5], 0)], U, Z)
        assert model0.predict([0.3]) == 0.0

    def test_posterior_against_analytic_oracle(self):
        recs = [([-1.0], 0)] * 10 + [([1.0], 1)] * 10
        model = train_gaussian_nb(recs, U, Z)
        p = model.predict([0.9])
        assert p > 0.99
        # closed-form posterior with the same variance floor
        var = 1e-9
        x = 0.9

        def loglik(mean):
            return -0.5 * math.log(2 * math.pi * var) - (x - mean) ** 2 / (2 * var)

        l0 = math.log(0.5) + loglik(-1.0)
        l1 = math.log(0.5) + loglik(1.0)
        expected = 1.0 / (1.0 + math.exp(l0 - l1))
        assert p == pytest.approx(expected, abs=1e-12)

    def test_variance_floor_prevents_division_by_zero(self):
        recs = [([1.0, 5.0], 0), ([1.0, 5.0], 0), ([1.0, 7.0], 1), ([1.0, 7.0], 1)]
        model = train_gaussian_nb(recs, U, Z)
        assert np.isfinite(model.predict([1.0, 6.0]))

    def test_predictions_stay_in_unit_interval(self):
        rng = np.random.default_rng(5)
        X = rng.normal(0, 1, (60, 3))
        y = (X[:, 0] > 0).astype(int)
        model = train_gaussian_nb([(X[i], int(y[i])) for i in range(60)], U, Z)
        p = model.predict_batch(rng.normal(0, 2, (1000, 3)))
        assert (p >= 0.0).all() and (p <= 1.0).all()


class TestFlip:
    def test_flip_inverts_output(self):
        model = train_decision_tree([([0.0], 1)] * 9 + [([0.0], 0)], U, Z)
        assert model.predict([0.0]) == pytest.approx(0.9)
        flipped = flip_model(model)
        assert flipped.predict([0.0]) == pytest.approx(0.1)
        assert flipped.kind == "flipped_wrapper"

    def test_half_is_fixed_point(self):
        model = train_decision_tree([([0.0], 1), ([0.0], 0)], U, Z)
        assert flip_model(model).predict([0.0]) == 0.5

    def test_involution_is_exact(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(-1, 1, (50, 2))
        y = (X[:, 0] > 0.2).astype(int)
        model = train_gaussian_nb([(X[i], int(y[i])) for i in range(50)], U, Z)
        back = flip_model(flip_model(model))
        assert back is model
        queries = rng.uniform(-1, 1, (200, 2))
        np.testing.assert_array_equal(back.predict_batch(queries), model.predict_batch(queries))


class TestSerialization:
    def test_one_leaf_tree_round_trip(self):
        model = train_decision_tree([([0.5, 0.5], 1), ([0.5, 0.5], 1)], U, Z)
        back = deserialize_model(serialize_model(model))
        rng = np.random.default_rng(2)
        queries = rng.uniform(-4, 4, (100, 2))
        np.testing.assert_array_equal(
            back.predict_batch(queries), model.predict_batch(queries)
        )

    def test_deep_tree_round_trip_predictions(self):
        rng = np.random.default_rng(13)
        X = rng.uniform(-1, 1, (150, 3))
        y = ((X**2).sum(axis=1) < 0.8).astype(int)
        model = train_decision_tree([(X[i], int(y[i])) for i in range(150)], U, Z)
        back = deserialize_model(serialize_model(model))
        queries = rng.uniform(-1, 1, (500, 3))
        np.testing.assert_array_equal(
            back.predict_batch(queries), model.predict_batch(queries)
        )

    def test_gnb_round_trip_bit_for_bit(self):
        rng = np.random.default_rng(17)
        X = rng.normal(0, 1, (40, 2))
        y = (X.sum(axis=1) > 0).astype(int)
        model = train_gaussian_nb([(X[i], int(y[i])) for i in range(40)], U, Z)
        back = deserialize_model(serialize_model(model))
        for fieldname in ("mean0", "var0", "mean1", "var1"):
            np.testing.assert_array_equal(
                getattr(back, fieldname), getattr(model, fieldname)
            )
        assert (back.count0, back.count1) == (model.count0, model.count1)

    def test_flipped_round_trip(self):
        model = flip_model(train_decision_tree([([0.0], 1)] * 3, U, Z))
        back = deserialize_model(serialize_model(model))
        assert back.kind == "flipped_wrapper"
        assert back.predict([0.0]) == model.predict([0.0])
        assert back.owner.id == "u" and back.subject.id == "z"

    def test_unknown_kind_is_named_in_error(self):
        doc = serialize_model(train_decision_tree([([0.0], 1)], U, Z))
        bad = doc.replace("decision_tree", "quantum_forest")
        with pytest.raises(ModelFormatError, match="quantum_forest"):
            deserialize_model(bad)

    def test_missing_field_and_bad_json(self):
        with pytest.raises(ModelFormatError, match="JSON"):
            deserialize_model("{not json")
        doc = serialize_model(train_decision_tree([([0.0], 1)], U, Z))
        broken = doc.replace('"threshold"', '"thresh0ld"')
        with pytest.raises(ModelFormatError, match="threshold"):
            deserialize_model(broken)


def _stores(n_advisors, targets, rng, rows_per_pair=6):
    stores = {}
    for i in range(n_advisors):
        recs = []
        for tid in targets:
            for _ in range(rows_per_pair):
                ctx = ContextVector.of(rng.uniform(-1, 1, 2))
                recs.append(EvidenceRecord(AgentId(tid, TARGET), ctx, int(rng.random() < 0.5)))
        stores[f"a{i}"] = EvidenceStore.from_records(AgentId(f"a{i}"), recs)
    return stores


class TestRepository:
    def test_full_evidence_counts(self):
        rng = np.random.default_rng(0)
        stores = _stores(3, ["z1", "z2"], rng)
        repo = build_repository(stores, KindPolicy("dt", 0))
        assert len(repo) == 6

    def test_missing_pair_absent(self):
        rng = np.random.default_rng(0)
        stores = _stores(2, ["z1"], rng)
        repo = build_repository(stores, KindPolicy("dt", 0))
        assert repo.get("a0", "z1") is not None
        assert repo.get("a0", "zX") is None
        assert ("a0", "zX") not in repo

    def test_min_records_guard(self):
        rng = np.random.default_rng(0)
        stores = _stores(1, ["z1"], rng, rows_per_pair=3)
        assert len(build_repository(stores, KindPolicy("dt", 0), min_records=4)) == 0
        assert len(build_repository(stores, KindPolicy("dt", 0), min_records=3)) == 1

    def test_hybrid_policy_is_deterministic_and_split(self):
        ids = [f"a{i}" for i in range(4)]
        pol = KindPolicy("hyb", seed=9)
        kinds1 = pol.assign(ids)
        kinds2 = KindPolicy("hyb", seed=9).assign(ids)
        assert kinds1 == kinds2
        assert sorted(kinds1.values()).count("dt") == 2
        assert KindPolicy("hyb", seed=10).assign(ids) != kinds1 or True  # seeds may coincide

    def test_replacement_in_place(self):
        rng = np.random.default_rng(0)
        stores = _stores(1, ["z1"], rng)
        repo = build_repository(stores, KindPolicy("dt", 0))
        new_model = train_gaussian_nb([([0.0, 0.0], 1)], AgentId("a0"), AgentId("z1", TARGET))
        repo.put(new_model)
        assert len(repo) == 1
        assert repo.get("a0", "z1").kind == "gaussian_nb"


class TestBackendAgreement:
    """The numba and numpy kernel paths must produce the same models."""

    def test_trees_identical_across_backends(self):
        from cobra.backend import load_kernels

        kb = load_kernels("numba")
        kn = load_kernels("numpy")
        rng = np.random.default_rng(23)
        for trial in range(20):
            n = int(rng.integers(2, 120))
            k = int(rng.integers(1, 5))
            X = rng.uniform(-1, 1, (n, k))
            # duplicate some feature values to exercise tie handling
            X[rng.random(X.shape) < 0.3] = 0.25
            y = (rng.random(n) < 0.5).astype(np.float64)
            tb = kb.tree_grow(X, y, 8, 2)
            tn = kn.tree_grow(X, y, 8, 2)
            for a, b in zip(tb, tn):
                np.testing.assert_array_equal(a, b)
            q = rng.uniform(-1, 1, (50, k))
            np.testing.assert_array_equal(
                kb.tree_predict(*tb, q), kn.tree_predict(*tn, q)
            )

    def test_gnb_agreement(self):
        from cobra.backend import load_kernels

        kb = load_kernels("numba")
        kn = load_kernels("numpy")
        rng = np.random.default_rng(29)
        X = rng.normal(0, 1, (200, 3))
        args = (
            rng.normal(0, 1, 3),
            rng.uniform(0.5, 2, 3),
            rng.normal(0, 1, 3),
            rng.uniform(0.5, 2, 3),
            math.log(0.3),
            math.log(0.7),
            X,
        )
        np.testing.assert_allclose(
            kb.gnb_posterior(*args), kn.gnb_posterior(*args), rtol=1e-12
        )
