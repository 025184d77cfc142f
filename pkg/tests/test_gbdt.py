import math

import numpy as np
import pytest

from pitchspace.features import PassSampleTable
from pitchspace.gbdt import (
    GbdtHyperParams,
    classification_metrics,
    compare_ranking_variables,
    default_grid,
    format_metrics_table,
    format_ranking_table,
    grid_search_cv,
    load_model,
    predict_proba,
    save_model,
    stratified_kfold,
    train_gbdt,
)
from pitchspace.dominance import MotionParams
from pitchspace.pitch import PitchSpec, WeightParams
from pitchspace.synth import SynthConfig, synthesize_match


def make_table(X, y, cols=None):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    cols = cols or [f"f{j}" for j in range(X.shape[1])]
    return PassSampleTable(
        event_ids=[f"E{i}" for i in range(len(y))],
        labels=y,
        columns=cols,
        raw=X,
        selected=[() for _ in y],
    )


def random_table(rng, n=400, d=6):
    X = rng.normal(0.0, 1.0, (n, d))
    logit = 1.5 * X[:, 0] - 2.0 * X[:, d // 2] + 0.5 * X[:, d - 1]
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
    return make_table(X, y)


class TestHyperParams:
    def test_learning_rate_zero_rejected(self):
        with pytest.raises(ValueError):
            GbdtHyperParams(learning_rate=0.0)

    @pytest.mark.parametrize(
        "kwargs",
        [{"n_trees": 0}, {"max_depth": 0}, {"subsample": 0.0}, {"subsample": 1.5},
         {"l2_lambda": -1.0}],
    )
    def test_invariants(self, kwargs):
        with pytest.raises(ValueError):
            GbdtHyperParams(**kwargs)

    def test_default_grid_is_documented_cross_product(self):
        grid = default_grid()
        assert len(grid) == 12
        assert {g.max_depth for g in grid} == {3, 5}
        assert {g.learning_rate for g in grid} == {0.1, 0.3}
        assert {g.n_trees for g in grid} == {50, 100, 200}
        assert all(g.subsample == 1.0 and g.gamma == 0.0 and g.l2_lambda == 1.0 for g in grid)


class TestTraining:
    def test_linearly_separable_reaches_full_accuracy(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 1.0], [11.0, 1.0]])
        y = np.array([0, 0, 1, 1])
        model = train_gbdt(make_table(X, y), GbdtHyperParams(n_trees=10, max_depth=2,
                                                             learning_rate=0.5))
        preds = model.predict_proba_batch(X) >= 0.5
        assert np.array_equal(preds.astype(int), y)

    def test_single_class_rejected(self):
        X = np.array([[0.0], [1.0]])
        with pytest.raises(ValueError):
            train_gbdt(make_table(X, np.array([1, 1])), GbdtHyperParams())

    def test_logloss_nonincreasing(self, rng):
        model = train_gbdt(random_table(rng), GbdtHyperParams(n_trees=60, max_depth=3,
                                                              learning_rate=0.3))
        ll = model.training_logloss
        assert all(b <= a + 1e-12 for a, b in zip(ll, ll[1:]))

    def test_row_permutation_yields_identical_trees(self, rng):
        table = random_table(rng)
        hp = GbdtHyperParams(n_trees=25, max_depth=4, learning_rate=0.2)
        m1 = train_gbdt(table, hp)
        perm = rng.permutation(len(table))
        m2 = train_gbdt(table.subset(perm), hp)
        assert m1.base_score == m2.base_score
        for t1, t2 in zip(m1.trees, m2.trees):
            assert t1.to_dict() == t2.to_dict()

    def test_subsample_deterministic_under_seed(self, rng):
        table = random_table(rng)
        hp = GbdtHyperParams(n_trees=15, max_depth=3, subsample=0.7, seed=5)
        m1, m2 = train_gbdt(table, hp), train_gbdt(table, hp)
        for t1, t2 in zip(m1.trees, m2.trees):
            assert t1.to_dict() == t2.to_dict()

    def test_min_child_weight_blocks_small_leaves(self, rng):
        table = random_table(rng, n=100)
        blocked = train_gbdt(table, GbdtHyperParams(n_trees=3, max_depth=6,
                                                    min_child_weight=1e9))
        assert all(len(t.feature) == 1 for t in blocked.trees)  # all stumps pruned to leaves

    def test_gamma_prunes_weak_splits(self, rng):
        table = random_table(rng, n=200)
        free = train_gbdt(table, GbdtHyperParams(n_trees=5, max_depth=4))
        taxed = train_gbdt(table, GbdtHyperParams(n_trees=5, max_depth=4, gamma=1e6))
        assert sum(len(t.feature) for t in taxed.trees) < sum(len(t.feature) for t in free.trees)


class TestPrediction:
    def test_empty_ensemble_is_base_score(self, rng):
        # A huge gamma prunes every split; margins collapse to the prior.
        table = random_table(rng, n=50)
        model = train_gbdt(table, GbdtHyperParams(n_trees=3, gamma=1e9))
        p_bar = table.labels.mean()
        assert predict_proba(model, np.zeros(6)) == pytest.approx(p_bar, abs=1e-9)

    def test_monotone_single_feature_tree(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        model = train_gbdt(make_table(X, y), GbdtHyperParams(n_trees=5, max_depth=1,
                                                             learning_rate=0.5))
        p_low = predict_proba(model, np.array([0.5]))
        p_high = predict_proba(model, np.array([2.5]))
        assert p_high > p_low

    def test_margin_additivity_path_trace(self, rng):
        table = random_table(rng)
        model = train_gbdt(table, GbdtHyperParams(n_trees=20, max_depth=3))
        X = table.imputed(model.medians)
        margins = model.margin(table.raw)
        for i in range(0, len(X), 37):
            total = model.base_score
            for tree in model.trees:
                node = 0
                while tree.feature[node] >= 0:
                    j = tree.feature[node]
                    node = tree.left[node] if X[i, j] <= tree.threshold[node] else tree.right[node]
                total += tree.value[node]
            assert abs(total - margins[i]) < 1e-9

    def test_probabilities_strictly_inside_unit_interval(self, rng):
        table = random_table(rng)
        model = train_gbdt(table, GbdtHyperParams(n_trees=50, max_depth=4, learning_rate=0.3))
        p = model.predict_proba_batch(table.raw)
        assert np.all(p > 0.0) and np.all(p < 1.0)

    def test_dict_row_and_column_mismatch(self, rng):
        table = random_table(rng, n=50)
        model = train_gbdt(table, GbdtHyperParams(n_trees=3))
        row = {c: 0.0 for c in model.feature_names}
        assert 0.0 < predict_proba(model, row) < 1.0
        with pytest.raises(ValueError):
            predict_proba(model, np.zeros(3))
        with pytest.raises(ValueError):
            predict_proba(model, {c: 0.0 for c in model.feature_names[:-1]})

    def test_non_finite_inputs_resolved_by_medians(self, rng):
        table = random_table(rng, n=80)
        model = train_gbdt(table, GbdtHyperParams(n_trees=5))
        row = np.zeros(6)
        row[2] = math.inf
        imputed_row = row.copy()
        imputed_row[2] = model.medians[model.feature_names[2]]
        assert predict_proba(model, row) == predict_proba(model, imputed_row)

    def test_monotone_transform_preserves_decision_paths(self, rng):
        table = random_table(rng, n=250)
        hp = GbdtHyperParams(n_trees=15, max_depth=3)
        base_model = train_gbdt(table, hp)
        base_paths = base_model.decision_paths(table.raw)
        for k in range(20):
            r = np.random.default_rng(k)
            a = r.uniform(0.2, 2.0, size=6)
            b = r.uniform(0.0, 1.5, size=6)
            X2 = a * table.raw ** 3 + b * table.raw  # strictly increasing per column
            t2 = make_table(X2, table.labels)
            m2 = train_gbdt(t2, hp)
            assert np.array_equal(m2.decision_paths(X2), base_paths)


class TestMetrics:
    def test_hand_arithmetic_fixture(self):
        # TP=3, FP=1, FN=2, TN=4
        labels = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0]
        probs = [0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
        r = classification_metrics(labels, probs)
        assert r.accuracy == pytest.approx(0.7)
        assert r.per_class[1].precision == pytest.approx(0.75)
        assert r.per_class[1].recall == pytest.approx(0.6)
        assert r.per_class[1].f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)
        assert r.confusion == ((4, 1), (2, 3))
        assert sum(sum(row) for row in r.confusion) == r.n_samples

    def test_perfect_predictions(self):
        labels = [0, 1, 1, 0]
        probs = [0.1, 0.9, 0.8, 0.2]
        r = classification_metrics(labels, probs)
        assert r.accuracy == 1.0
        assert r.macro.f1 == 1.0
        assert r.per_class[0].precision == 1.0

    def test_empty_input_errors(self):
        with pytest.raises(ValueError):
            classification_metrics([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            classification_metrics([1, 0], [0.5])

    def test_table_format_snapshot(self):
        labels = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0]
        probs = [0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
        r = classification_metrics(labels, probs)
        text = format_metrics_table({"n=3": r})
        lines = text.splitlines()
        assert lines[0].split() == [
            "model", "accuracy", "prec(+)", "rec(+)", "f1(+)",
            "prec(-)", "rec(-)", "f1(-)", "prec(M)", "rec(M)", "f1(M)",
        ]
        assert lines[1].startswith("n=3")
        assert "0.700" in lines[1]
        # Reference rows carry the published full-season values.
        assert any("0.685" in l for l in lines)
        assert any("0.752" in l for l in lines)


class TestCrossValidation:
    def test_stratified_folds_preserve_ratio(self, rng):
        labels = np.array([1] * 70 + [0] * 30)
        folds = stratified_kfold(labels, 5, seed=3)
        assert sorted(np.concatenate(folds).tolist()) == list(range(100))
        for f in folds:
            assert np.sum(labels[f] == 1) == 14
            assert np.sum(labels[f] == 0) == 6

    def test_ratio_within_one_sample_when_uneven(self, rng):
        labels = np.array([1] * 73 + [0] * 29)
        folds = stratified_kfold(labels, 5, seed=3)
        pos = [int(np.sum(labels[f] == 1)) for f in folds]
        neg = [int(np.sum(labels[f] == 0)) for f in folds]
        assert max(pos) - min(pos) <= 1
        assert max(neg) - min(neg) <= 1

    def test_rare_class_errors(self):
        labels = np.array([1] * 99 + [0])
        with pytest.raises(ValueError):
            stratified_kfold(labels, 5, seed=0)

    def test_same_seed_identical_folds(self, rng):
        labels = (rng.random(60) < 0.6).astype(np.int64)
        f1 = stratified_kfold(labels, 4, seed=9)
        f2 = stratified_kfold(labels, 4, seed=9)
        assert all(np.array_equal(a, b) for a, b in zip(f1, f2))

    def test_singleton_grid_returned(self, rng):
        table = random_table(rng, n=120)
        hp = GbdtHyperParams(n_trees=10, max_depth=2)
        best, results = grid_search_cv(table, [hp], k=3, seed=1)
        assert best == hp and len(results) == 1

    def test_duplicate_configs_keep_earlier(self, rng):
        table = random_table(rng, n=120)
        hp = GbdtHyperParams(n_trees=10, max_depth=2)
        best, results = grid_search_cv(table, [hp, hp], k=3, seed=1)
        assert results[0].mean_accuracy == results[1].mean_accuracy
        assert best is results[0].hyperparams or best == results[0].hyperparams

    def test_same_seed_identical_metrics(self, rng):
        table = random_table(rng, n=150)
        grid = [GbdtHyperParams(n_trees=10, max_depth=2),
                GbdtHyperParams(n_trees=20, max_depth=3)]
        _, r1 = grid_search_cv(table, grid, k=3, seed=4)
        _, r2 = grid_search_cv(table, grid, k=3, seed=4)
        assert [r.fold_accuracies for r in r1] == [r.fold_accuracies for r in r2]

    def test_empty_grid_errors(self, rng):
        with pytest.raises(ValueError):
            grid_search_cv(random_table(rng, n=60), [], k=3, seed=0)


class TestSerialization:
    def test_round_trip_exact(self, rng, tmp_path):
        table = random_table(rng)
        model = train_gbdt(table, GbdtHyperParams(n_trees=12, max_depth=3))
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert back.base_score == model.base_score
        assert back.medians == model.medians
        assert back.hyperparams == model.hyperparams
        assert np.array_equal(back.margin(table.raw), model.margin(table.raw))
        save_model(back, tmp_path / "m2.json")
        assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()

    def test_format_marker_checked(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"format": "something-else"}', encoding="utf-8")
        with pytest.raises(ValueError):
            load_model(tmp_path / "bad.json")


class TestRankingComparison:
    def test_n3_at_least_n1_minus_one_point(self):
        # More receivers carry more information: paired CV on the same corpus
        # must not lose more than a point going from n=1 to n=3.
        from pitchspace.features import assemble_table, extract_event_features

        pitch = PitchSpec(grid_cell=2.0)
        frames, events, _ = synthesize_match(SynthConfig(passes=400), seed=77)
        feats = extract_event_features(frames, events, pitch, MotionParams(), WeightParams())
        grid = [GbdtHyperParams(n_trees=40, max_depth=3, learning_rate=0.2)]
        accs = {}
        for n in (1, 3):
            table = assemble_table(feats, n, "dist_ball")
            _, results = grid_search_cv(table, grid, k=5, seed=17)
            accs[n] = results[0].mean_accuracy
        assert accs[3] >= accs[1] - 0.01

    def test_dist_ball_rule_selects_dist_ball(self):
        pitch = PitchSpec(grid_cell=2.0)
        frames, events, _ = synthesize_match(SynthConfig(passes=250), seed=42)
        grid = [GbdtHyperParams(n_trees=40, max_depth=3, learning_rate=0.2)]
        report = compare_ranking_variables(
            [(frames, events)], 3, grid, 4, 17, pitch, MotionParams(), WeightParams()
        )
        assert report.best_variable == "dist_ball"
        assert [r.variable for r in report.rows] == [
            "fast_space_vel", "dist_ball", "time_to_player", "time_to_passline"
        ]
        text = format_ranking_table(report)
        assert "0.559" in text  # published reference column
        assert "<- selected" in text
