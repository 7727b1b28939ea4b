import math

import numpy as np
import pytest

from speechacts.config import RunConfig
from speechacts.corpus import LabelCatalog, modeling_examples
from speechacts.evaluate import (
    AVG_LABEL,
    MetricsRow,
    average_rows_across_folds,
    cross_validate,
    featurize_fold,
    fisher_score,
    per_label_metrics,
    rank_features,
    rank_features_for_examples,
    stratified_kfold,
    weighted_average,
)

from conftest import make_conversation

PUBLISHED_ROWS = [
    MetricsRow("apianswer", 0.93, 0.76, 0.83, 24.6),
    MetricsRow("apiquestion", 0.81, 0.66, 0.71, 17.2),
    MetricsRow("clarificationanswer", 0.13, 0.07, 0.09, 6.0),
    MetricsRow("clarificationquestion", 0.59, 0.41, 0.48, 32.6),
    MetricsRow("confirmation", 0.88, 0.8, 0.83, 27.0),
    MetricsRow("documentationanswer", 0.25, 0.2, 0.22, 3.2),
    MetricsRow("implementationquestion", 0.52, 0.21, 0.28, 10.6),
    MetricsRow("implementationstatement", 0.0, 0.0, 0.0, 3.0),
    MetricsRow("introduction", 0.76, 0.6, 0.63, 4.0),
    MetricsRow("statement", 0.69, 0.4, 0.51, 49.8),
    MetricsRow("systemquestion", 0.37, 0.22, 0.27, 4.8),
]


def deviation_oracle(label_sets, plan):
    """Exhaustive per-fold per-label positive counts vs proportional shares."""
    names = sorted({name for ls in label_sets for name in ls})
    worst = 0.0
    for name in names:
        share = sum(1 for ls in label_sets if name in ls) / plan.n_folds
        for fold in range(plan.n_folds):
            got = sum(
                1 for i, f in plan.assignment.items() if f == fold and name in label_sets[i]
            )
            worst = max(worst, abs(got - share))
    return worst


class TestStratifiedKFold:
    def test_single_label_even_split(self):
        plan = stratified_kfold([frozenset({"a"})] * 25, 5, seed=0)
        sizes = [len(plan.members(f)) for f in range(5)]
        assert sizes == [5, 5, 5, 5, 5]
        assert plan.violations == []

    def test_two_labels_exact_divisibility(self):
        label_sets = [frozenset({"a"})] * 10 + [frozenset({"b"})] * 10
        plan = stratified_kfold(label_sets, 5, seed=0)
        for fold in range(5):
            members = plan.members(fold)
            assert sum(1 for i in members if "a" in label_sets[i]) == 2
            assert sum(1 for i in members if "b" in label_sets[i]) == 2

    def test_randomized_dataset_counting_oracle(self):
        rng = np.random.default_rng(60)
        names = ["w", "x", "y", "z"]
        label_sets = [
            frozenset(n for n in names if rng.random() < 0.35) for _ in range(60)
        ]
        plan = stratified_kfold(label_sets, 5, seed=60)
        assert deviation_oracle(label_sets, plan) <= 1 + 1e-9
        assert plan.violations == []

    def test_partition(self):
        label_sets = [frozenset({"a"}) if i % 2 else frozenset({"b"}) for i in range(23)]
        plan = stratified_kfold(label_sets, 5, seed=3)
        assert sorted(plan.assignment) == list(range(23))
        assert {f for f in plan.assignment.values()} <= set(range(5))

    def test_deterministic_given_seed(self):
        label_sets = [frozenset({"a", "b"}) if i % 3 else frozenset({"a"}) for i in range(30)]
        assert (
            stratified_kfold(label_sets, 5, seed=9).assignment
            == stratified_kfold(label_sets, 5, seed=9).assignment
        )

    def test_label_free_examples_distributed(self):
        label_sets = [frozenset({"a"})] * 5 + [frozenset()] * 10
        plan = stratified_kfold(label_sets, 5, seed=0)
        sizes = [len(plan.members(f)) for f in range(5)]
        assert sizes == [3, 3, 3, 3, 3]

    def test_too_small_dataset(self):
        with pytest.raises(ValueError):
            stratified_kfold([frozenset({"a"})] * 3, 5, seed=0)


def confusion_oracle(gold, predicted, name):
    """Brute-force per-label confusion counts."""
    tp = fp = fn = tn = 0
    for g, p in zip(gold, predicted):
        if name in g and name in p:
            tp += 1
        elif name not in g and name in p:
            fp += 1
        elif name in g and name not in p:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


class TestPerLabelMetrics:
    def test_hand_counted_example(self):
        catalog = LabelCatalog(labels=("a", "b"))
        gold = [frozenset({"a"}), frozenset({"a"}), frozenset({"b"})]
        predicted = [frozenset({"a"}), frozenset(), frozenset({"a"})]
        row_a = per_label_metrics(gold, predicted, catalog)[0]
        assert (row_a.precision, row_a.recall, row_a.f_measure, row_a.support) == (0.5, 0.5, 0.5, 2.0)

    def test_perfect_predictions(self):
        catalog = LabelCatalog(labels=("a", "b"))
        gold = [frozenset({"a"}), frozenset({"a", "b"})]
        rows = per_label_metrics(gold, gold, catalog)
        for row in rows:
            assert row.precision == row.recall == row.f_measure == 1.0

    def test_absent_label_all_zero(self):
        catalog = LabelCatalog(labels=("a", "ghost"))
        gold = [frozenset({"a"})]
        rows = per_label_metrics(gold, gold, catalog)
        ghost = rows[1]
        assert (ghost.precision, ghost.recall, ghost.f_measure, ghost.support) == (0, 0, 0, 0)

    def test_length_mismatch(self):
        catalog = LabelCatalog(labels=("a",))
        with pytest.raises(ValueError):
            per_label_metrics([frozenset()], [], catalog)

    def test_against_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        names = ("a", "b", "c", "d")
        catalog = LabelCatalog(labels=names)
        for _ in range(50):
            n = int(rng.integers(1, 51))
            gold = [frozenset(x for x in names if rng.random() < 0.4) for _ in range(n)]
            predicted = [frozenset(x for x in names if rng.random() < 0.4) for _ in range(n)]
            rows = per_label_metrics(gold, predicted, catalog)
            for row in rows:
                tp, fp, fn, _ = confusion_oracle(gold, predicted, row.label)
                assert row.precision == (tp / (tp + fp) if tp + fp else 0.0)
                assert row.recall == (tp / (tp + fn) if tp + fn else 0.0)
                expected_f = (
                    2 * row.precision * row.recall / (row.precision + row.recall)
                    if row.precision + row.recall
                    else 0.0
                )
                assert row.f_measure == expected_f
                assert row.support == tp + fn


class TestAveraging:
    def test_fractional_support_mean(self):
        folds = [[MetricsRow("a", 1.0, 1.0, 1.0, s)] for s in (25, 24, 25, 24, 25)]
        (row,) = average_rows_across_folds(folds)
        assert row.support == pytest.approx(24.6)

    def test_identical_rows_unchanged(self):
        row = MetricsRow("a", 0.75, 0.5, 0.625, 12.0)
        (out,) = average_rows_across_folds([[row], [row], [row]])
        assert out == row

    def test_f_mean_not_harmonic_of_means(self):
        folds = [[MetricsRow("a", 1.0, 1.0, 1.0, 5)], [MetricsRow("a", 0.0, 0.0, 0.0, 5)]]
        (row,) = average_rows_across_folds(folds)
        assert row.f_measure == 0.5
        harmonic = 2 * row.precision * row.recall / (row.precision + row.recall)
        assert row.f_measure != harmonic or harmonic == 0.5

    def test_missing_fold_rows(self):
        with pytest.raises(ValueError):
            average_rows_across_folds([[MetricsRow("a", 1, 1, 1, 1)], [MetricsRow("b", 1, 1, 1, 1)]])


class TestWeightedAverage:
    def test_published_table_reproduction(self):
        avg = weighted_average(PUBLISHED_ROWS)
        assert avg.label == AVG_LABEL
        assert avg.precision == pytest.approx(0.69, abs=0.005)
        assert avg.recall == pytest.approx(0.50, abs=0.005)
        assert avg.f_measure == pytest.approx(0.57, abs=0.005)
        assert avg.support == pytest.approx(16.62, abs=0.005)

    def test_single_row_identity(self):
        row = MetricsRow("a", 0.4, 0.3, 0.34, 7.0)
        avg = weighted_average([row])
        assert (avg.precision, avg.recall, avg.f_measure, avg.support) == (0.4, 0.3, 0.34, 7.0)

    def test_support_weighting(self):
        rows = [MetricsRow("a", 1.0, 1.0, 1.0, 1.0), MetricsRow("b", 0.0, 0.0, 0.0, 3.0)]
        assert weighted_average(rows).precision == 0.25

    def test_equal_supports_reduce_to_mean(self):
        rows = [MetricsRow("a", 0.2, 0.4, 0.26, 5.0), MetricsRow("b", 0.8, 0.6, 0.68, 5.0)]
        avg = weighted_average(rows)
        assert avg.precision == pytest.approx(0.5)
        assert avg.recall == pytest.approx(0.5)

    def test_zero_total_support(self):
        with pytest.raises(ValueError):
            weighted_average([MetricsRow("a", 0, 0, 0, 0.0)])


def separable_corpus(n_per_label=15, labels=("qa", "qb", "qc")):
    """Each label perfectly indicated by its own keyword."""
    rows = []
    for i in range(n_per_label):
        for name in labels:
            rows.append(
                ("participant", 3.0 * len(rows), f"{name}word common{i % 4} extra", [name])
            )
    conv = make_conversation("c1", rows)
    catalog = LabelCatalog(labels=tuple(labels))
    return modeling_examples([conv], catalog), catalog


class TestCrossValidate:
    def test_separable_corpus_perfect_rows(self):
        examples, catalog = separable_corpus()
        report = cross_validate(examples, catalog, RunConfig(seed=1))
        for row in report.rows:
            assert row.precision == 1.0
            assert row.recall == 1.0

    def test_no_signal_band(self):
        rng = np.random.default_rng(99)
        catalog = LabelCatalog(labels=("a", "b"))
        precisions = []
        for seed in range(10):
            rows = []
            for i in range(60):
                labels = [rng.choice(["a", "b"])]
                rows.append(("participant", 2.0 * i, f"word{rng.integers(0, 30)} tail", labels))
            conv = make_conversation("c1", rows)
            examples = modeling_examples([conv], catalog)
            report = cross_validate(examples, catalog, RunConfig(seed=seed, n_folds=5))
            precisions.append(report.average_row.precision)
        assert 0.3 <= sum(precisions) / len(precisions) <= 0.7

    def test_every_example_in_exactly_one_test_fold(self):
        examples, catalog = separable_corpus()
        plan = stratified_kfold([ex.labels for ex in examples], 5, seed=1)
        seen = []
        for fold in range(5):
            seen.extend(plan.members(fold))
        assert sorted(seen) == list(range(len(examples)))

    def test_leakage_canary_token(self):
        examples, catalog = separable_corpus()
        config = RunConfig(seed=1)
        plan = stratified_kfold([ex.labels for ex in examples], config.n_folds, config.seed)
        for i in plan.members(0):
            turn = examples[i].turn
            turn.text = turn.text + " canaryzzz"
        _, test, vocabulary, _, _, X_test = featurize_fold(examples, plan, 0, config)
        assert "canaryzzz" not in vocabulary
        # test rows are real turns: word block stays exactly binary
        words = X_test[:, : len(vocabulary)]
        assert np.isin(words, [0.0, 1.0]).all()
        assert X_test.shape[0] == len(test)

    def test_determinism(self):
        examples, catalog = separable_corpus(n_per_label=8)
        a = cross_validate(examples, catalog, RunConfig(seed=7, n_folds=3))
        b = cross_validate(examples, catalog, RunConfig(seed=7, n_folds=3))
        assert a.rows == b.rows and a.average_row == b.average_row


class TestFisherScore:
    def test_hand_computed_example(self):
        # positives [1,1,0], negatives [0,0]:
        # overall mean 0.4; numerator (2/3-0.4)^2 + (0-0.4)^2 = 52/225
        # denominator = sample variances 1/3 + 0 -> score (52/225)/(1/3) = 52/75
        score = fisher_score([1, 1, 0, 0, 0], [True, True, True, False, False])
        assert score == pytest.approx(52 / 75, rel=1e-12)

    def test_identical_means_zero(self):
        score = fisher_score([0.0, 1.0, 0.0, 1.0], [True, True, False, False])
        assert score == 0.0

    def test_constant_feature_zero(self):
        assert fisher_score([3.0] * 6, [True] * 3 + [False] * 3) == 0.0

    def test_separated_constant_groups_infinite(self):
        score = fisher_score([1.0, 1.0, 0.0, 0.0], [True, True, False, False])
        assert math.isinf(score)

    def test_small_side_warns_and_zeroes(self):
        with pytest.warns(RuntimeWarning):
            assert fisher_score([1.0, 0.0, 0.5], [True, False, False]) == 0.0

    def test_empty_side_errors(self):
        with pytest.raises(ValueError):
            fisher_score([1.0, 2.0], [True, True])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            fisher_score([1.0], [True, False])


class TestRankFeatures:
    def intro_examples(self):
        # "hello" is the only token perfectly aligned with one label; every
        # other word varies within its label so its fisher score stays finite
        catalog = LabelCatalog(labels=("introduction", "question"))
        intro_tails = ["there friend", "again pal", "there pal", "again friend"]
        question_heads = ["what about", "how come", "what is", "how about"]
        rows = []
        for i in range(8):
            rows.append(
                ("participant", 2.0 * len(rows), f"hello {intro_tails[i % 4]}", ["introduction"])
            )
            rows.append(
                ("participant", 2.0 * len(rows), f"{question_heads[i % 4]} item{i % 3}", ["question"])
            )
        conv = make_conversation("c1", rows)
        return modeling_examples([conv], catalog), catalog

    def test_dedicated_keyword_ranked_first(self):
        examples, catalog = self.intro_examples()
        ranking = rank_features_for_examples(examples, catalog, "introduction", top_n=10)
        assert ranking.ranked[0][0] == "hello"

    def test_top_n_larger_than_feature_count(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
        label_sets = [frozenset({"a"}), frozenset(), frozenset({"a"}), frozenset()]
        ranking = rank_features(X, label_sets, ["f1", "f2"], "a", top_n=99)
        assert len(ranking.ranked) == 2

    def test_equal_scores_lexicographic(self):
        X = np.array(
            [[1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
        )
        label_sets = [frozenset({"a"}), frozenset({"a"}), frozenset(), frozenset()]
        ranking = rank_features(X, label_sets, ["zeta", "alpha"], "a", top_n=2)
        assert [name for name, _ in ranking.ranked] == ["alpha", "zeta"]

    def test_shuffle_invariance(self):
        examples, catalog = self.intro_examples()
        baseline = rank_features_for_examples(examples, catalog, "introduction")
        rng = np.random.default_rng(4)
        shuffled = [examples[i] for i in rng.permutation(len(examples))]
        again = rank_features_for_examples(shuffled, catalog, "introduction")
        assert [n for n, _ in baseline.ranked] == [n for n, _ in again.ranked]
        assert [s for _, s in baseline.ranked] == pytest.approx([s for _, s in again.ranked])

    def test_unknown_label(self):
        examples, catalog = self.intro_examples()
        with pytest.raises(ValueError):
            rank_features_for_examples(examples, catalog, "nolabel")

    def test_label_without_positives(self):
        X = np.array([[1.0], [0.0]])
        label_sets = [frozenset(), frozenset()]
        with pytest.raises(ValueError):
            rank_features(X, label_sets, ["f"], "a")

    def test_shallow_feature_names_in_ranking(self):
        examples, catalog = self.intro_examples()
        ranking = rank_features_for_examples(examples, catalog, "introduction", top_n=0)
        names = {name for name, _ in ranking.ranked}
        assert {"slen_sf", "wc_sf", "ppau_sf"} <= names
