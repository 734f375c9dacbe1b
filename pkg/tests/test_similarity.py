"""Score transforms, correlation measures, count matrices, statistics."""
from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

import class_atlas as ca
from class_atlas import errors as E
from class_atlas.similarity import parse_counts_binary, \
    parse_similarity_binary, write_counts_binary, write_similarity_binary, \
    write_similarity_csv
from conftest import make_scores, rank_reference, similarity_reference

finite_rows = st.integers(min_value=2, max_value=12)
finite_cols = st.integers(min_value=2, max_value=8)


def random_logits(seed, n, m):
    return make_scores(np.random.default_rng(seed).normal(size=(n, m)))


# ---------------------------------------------------------------------------
# softmax_rows
# ---------------------------------------------------------------------------

class TestSoftmax:
    def test_symmetric_pair(self):
        out = ca.softmax_rows(make_scores([[0.0, 0.0]]))
        assert list(out.values[0]) == [0.5, 0.5]

    def test_shift_invariance_guards_overflow(self):
        out = ca.softmax_rows(make_scores([[1000.0, 1000.0]]))
        assert list(out.values[0]) == [0.5, 0.5]

    def test_closed_form_quarters(self):
        out = ca.softmax_rows(make_scores([[0.0, math.log(3.0)]]))
        assert out.values[0] == pytest.approx([0.25, 0.75], abs=1e-12)

    def test_rows_sum_to_one_and_mean_is_reciprocal_m(self):
        s = random_logits(0, 20, 7)
        out = ca.softmax_rows(s)
        assert out.kind == "probability"
        assert np.abs(out.values.sum(axis=1) - 1.0).max() < 1e-12
        assert np.abs(out.values.mean(axis=1) - 1.0 / 7).max() < 1e-12

    def test_wrong_kind(self):
        probs = make_scores([[0.5, 0.5]], kind="probability")
        with pytest.raises(E.WrongKind):
            ca.softmax_rows(probs)


# ---------------------------------------------------------------------------
# rank_rows
# ---------------------------------------------------------------------------

class TestRankRows:
    def test_plain_row(self):
        out = ca.rank_rows(make_scores([[0.1, 0.7, 0.2]]))
        assert list(out.values[0]) == [1.0, 3.0, 2.0]
        assert out.kind == "rank"

    def test_average_tie_convention(self):
        out = ca.rank_rows(make_scores([[0.5, 0.5, 0.1]]))
        assert list(out.values[0]) == [2.5, 2.5, 1.0]

    def test_all_tied_row(self):
        out = ca.rank_rows(make_scores([[3.0, 3.0, 3.0, 3.0]]))
        assert list(out.values[0]) == [2.5] * 4

    def test_row_sums_exact(self):
        s = random_logits(1, 50, 9)
        out = ca.rank_rows(s)
        assert np.all(out.values.sum(axis=1) == 9 * 10 / 2)

    def test_invariant_under_softmax(self):
        s = random_logits(2, 30, 6)
        a = ca.rank_rows(s)
        b = ca.rank_rows(ca.softmax_rows(s))
        assert a.values.tobytes() == b.values.tobytes()

    def test_matches_plain_python_reference(self, np_rng):
        vals = np.round(np_rng.normal(size=(40, 7)), 1)  # force ties
        out = ca.rank_rows(make_scores(vals))
        for i in range(40):
            assert list(out.values[i]) == rank_reference(list(vals[i]))

    def test_matches_scipy_rankdata(self, np_rng):
        vals = np.round(np_rng.normal(size=(30, 8)), 1)
        out = ca.rank_rows(make_scores(vals))
        want = np.vstack([scipy.stats.rankdata(r, method="average")
                          for r in vals])
        assert np.array_equal(out.values, want)


# ---------------------------------------------------------------------------
# pearson_similarity
# ---------------------------------------------------------------------------

class TestPearson:
    def test_identical_columns(self):
        s = make_scores([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]])
        sim = ca.pearson_similarity(s)
        assert sim.values[0, 1] == pytest.approx(1.0, abs=1e-12)
        assert sim.measure == "pearson" and sim.source_kind == "logit"

    def test_exact_anticorrelation(self):
        s = make_scores([[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]])
        assert ca.pearson_similarity(s).values[0, 1] == \
            pytest.approx(-1.0, abs=1e-12)

    def test_hand_value_four_fifths(self):
        s = make_scores([[1.0, 1.0], [2.0, 3.0], [3.0, 2.0], [4.0, 4.0]])
        assert ca.pearson_similarity(s).values[0, 1] == \
            pytest.approx(0.8, abs=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(E.TooFewSamples):
            ca.pearson_similarity(make_scores([[1.0, 2.0]]))

    def test_degenerate_column_zeroed_and_recorded(self, np_rng):
        vals = np_rng.normal(size=(10, 4))
        vals[:, 2] = 7.0
        sim = ca.pearson_similarity(make_scores(vals))
        assert sim.degenerate_classes == frozenset({2})
        assert np.all(sim.values[2, :] == 0.0)
        assert np.all(sim.values[:, 2] == 0.0)
        assert sim.values[2, 2] == 0.0

    def test_matches_two_pass_reference(self, np_rng):
        vals = np_rng.normal(size=(25, 6))
        vals[:, 4] = -1.5  # one degenerate column
        sim = ca.pearson_similarity(make_scores(vals))
        want, degenerate = similarity_reference(vals)
        assert degenerate == [4]
        assert np.abs(sim.values - want).max() < 1e-12

    def test_matches_scipy_pairwise(self, np_rng):
        vals = np_rng.normal(size=(40, 5))
        sim = ca.pearson_similarity(make_scores(vals))
        for a in range(5):
            for b in range(a + 1, 5):
                want = scipy.stats.pearsonr(vals[:, a], vals[:, b]).statistic
                assert sim.values[a, b] == pytest.approx(want, abs=1e-12)

    def test_symmetry_is_exact(self, np_rng):
        sim = ca.pearson_similarity(make_scores(np_rng.normal(size=(31, 9))))
        assert np.array_equal(sim.values, sim.values.T)

    def test_byte_reproducible(self, np_rng):
        vals = np_rng.normal(size=(23, 6))
        a = ca.pearson_similarity(make_scores(vals))
        b = ca.pearson_similarity(make_scores(vals.copy()))
        assert a.values.tobytes() == b.values.tobytes()


# ---------------------------------------------------------------------------
# spearman_similarity
# ---------------------------------------------------------------------------

class TestSpearman:
    def test_equals_pearson_of_ranks_exactly(self, np_rng):
        s = make_scores(np.round(np_rng.normal(size=(20, 5)), 1))
        a = ca.spearman_similarity(s)
        b = ca.pearson_similarity(ca.rank_rows(s))
        assert a.values.tobytes() == b.values.tobytes()
        assert a.measure == "spearman"
        assert a.source_kind == "logit"

    def test_invariant_under_softmax_bitwise(self):
        s = random_logits(3, 25, 6)
        a = ca.spearman_similarity(s)
        b = ca.spearman_similarity(ca.softmax_rows(s))
        assert a.values.tobytes() == b.values.tobytes()

    def test_consistent_ordering_makes_rank_columns_degenerate(self):
        # Every row ranks the two classes identically, so the per-sample
        # rank columns are constant and both classes are degenerate.
        s = make_scores([[0.0, 1.0], [1.0, 3.0], [2.0, 5.0], [3.0, 8.0]])
        sim = ca.spearman_similarity(s)
        assert sim.degenerate_classes == frozenset({0, 1})
        assert np.all(sim.values == 0.0)


# ---------------------------------------------------------------------------
# invariance properties
# ---------------------------------------------------------------------------

class TestInvariance:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), n=finite_rows, m=finite_cols)
    def test_monotone_row_transform_keeps_spearman(self, seed, n, m):
        s = make_scores(np.random.default_rng(seed).normal(size=(n, m)))
        monotone = make_scores(np.arctan(s.values) * 2.0 + 1.0)
        a = ca.spearman_similarity(s)
        b = ca.spearman_similarity(monotone)
        assert a.values.tobytes() == b.values.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), n=finite_rows, m=finite_cols)
    def test_per_class_affine_keeps_pearson(self, seed, n, m):
        rng = np.random.default_rng(seed)
        vals = rng.normal(size=(n, m))
        scale = rng.uniform(0.1, 10.0, size=m)
        offset = rng.normal(size=m) * 5.0
        a = ca.pearson_similarity(make_scores(vals))
        b = ca.pearson_similarity(make_scores(vals * scale + offset))
        assert a.degenerate_classes == b.degenerate_classes
        assert np.abs(a.values - b.values).max() < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), n=finite_rows, m=finite_cols)
    def test_sample_order_invariance(self, seed, n, m):
        rng = np.random.default_rng(seed)
        vals = rng.normal(size=(n, m))
        perm = rng.permutation(n)
        a = ca.pearson_similarity(make_scores(vals))
        b = ca.pearson_similarity(make_scores(vals[perm]))
        assert np.abs(a.values - b.values).max() < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), n=finite_rows, m=finite_cols)
    def test_output_contract_on_random_input(self, seed, n, m):
        sim = ca.pearson_similarity(
            make_scores(np.random.default_rng(seed).normal(size=(n, m))))
        assert np.array_equal(sim.values, sim.values.T)
        assert sim.values.min() >= -1.0 and sim.values.max() <= 1.0
        assert np.all(np.diagonal(sim.values) == 1.0)


# ---------------------------------------------------------------------------
# count matrices
# ---------------------------------------------------------------------------

def labels_of(*sets):
    return ca.LabelData(
        sample_ids=tuple(f"s{i}" for i in range(len(sets))),
        labels=tuple(frozenset(s) for s in sets),
    )


class TestCooccurrence:
    def test_hand_fixture(self):
        cm = ca.cooccurrence_matrix(labels_of({"a", "b"}, {"a"}, {"b", "c"}),
                                    ("a", "b", "c"))
        want = np.array([[2, 1, 0], [1, 2, 1], [0, 1, 1]])
        assert np.array_equal(cm.counts, want)
        assert cm.kind == "cooccurrence"

    def test_single_label_dataset_is_diagonal(self):
        cm = ca.cooccurrence_matrix(labels_of({"a"}, {"b"}, {"a"}),
                                    ("a", "b"))
        assert np.array_equal(cm.counts, np.array([[2, 0], [0, 1]]))

    def test_empty_dataset_all_zero(self):
        cm = ca.cooccurrence_matrix(ca.LabelData((), ()), ("a", "b"))
        assert np.all(cm.counts == 0)

    def test_unknown_label_names_sample(self):
        with pytest.raises(E.UnknownLabel) as ei:
            ca.cooccurrence_matrix(labels_of({"zz"}), ("a", "b"))
        assert "s0" in str(ei.value)


class TestConfusion:
    def test_perfect_predictions_diagonal(self):
        s = make_scores([[9.0, 0.0], [9.0, 1.0], [0.0, 9.0]],
                        names=("a", "b"), sample_ids=("s0", "s1", "s2"))
        cm = ca.confusion_matrix(s, labels_of({"a"}, {"a"}, {"b"}))
        assert np.array_equal(cm.counts, np.array([[2, 0], [0, 1]]))
        assert cm.kind == "confusion"

    def test_hand_fixture(self):
        s = make_scores([[2.0, 1.0], [1.0, 2.0], [0.0, 2.0]],
                        names=("a", "b"), sample_ids=("s0", "s1", "s2"))
        cm = ca.confusion_matrix(s, labels_of({"a"}, {"a"}, {"b"}))
        assert np.array_equal(cm.counts, np.array([[1, 1], [0, 1]]))

    def test_argmax_tie_takes_lowest_index(self):
        s = make_scores([[5.0, 5.0]], names=("a", "b"), sample_ids=("s0",))
        cm = ca.confusion_matrix(s, labels_of({"b"}))
        assert np.array_equal(cm.counts, np.array([[0, 0], [1, 0]]))

    def test_multi_label_rejected(self):
        s = make_scores([[1.0, 2.0]], names=("a", "b"), sample_ids=("s0",))
        with pytest.raises(E.MultiLabelInput):
            ca.confusion_matrix(s, labels_of({"a", "b"}))

    def test_unknown_true_label(self):
        s = make_scores([[1.0, 2.0]], names=("a", "b"), sample_ids=("s0",))
        with pytest.raises(E.UnknownLabel):
            ca.confusion_matrix(s, labels_of({"zz"}))

    def test_sample_count_mismatch(self):
        s = make_scores([[1.0, 2.0]], names=("a", "b"), sample_ids=("s0",))
        with pytest.raises(E.SizeMismatch):
            ca.confusion_matrix(s, labels_of({"a"}, {"b"}))

    def test_row_sums_are_class_frequencies(self, np_rng):
        s = make_scores(np_rng.normal(size=(30, 3)), names=("a", "b", "c"),
                        sample_ids=tuple(f"s{i}" for i in range(30)))
        names = ["a", "b", "c"]
        truth = [names[i % 3] for i in range(30)]
        cm = ca.confusion_matrix(s, labels_of(*({t} for t in truth)))
        assert list(cm.counts.sum(axis=1)) == [10, 10, 10]


# ---------------------------------------------------------------------------
# distribution statistics
# ---------------------------------------------------------------------------

class TestDistributionStats:
    def test_symmetric_values_zero_skew(self):
        st_ = ca.distribution_stats([-1.0, 0.0, 1.0], n_bins=4)
        assert st_.skewness == 0.0
        assert st_.mean == 0.0
        assert st_.count == 3

    def test_hand_moments(self):
        st_ = ca.distribution_stats([0.0, 0.0, 0.0, 1.0], n_bins=2)
        assert st_.mean == 0.25
        assert st_.std == pytest.approx(math.sqrt(3.0 / 16.0), abs=1e-15)
        assert st_.skewness == pytest.approx(2.0 / math.sqrt(3.0), abs=1e-12)
        assert st_.excess_kurtosis == pytest.approx(-2.0 / 3.0, abs=1e-12)

    def test_matches_scipy_moments(self, np_rng):
        vals = np_rng.normal(size=500)
        st_ = ca.distribution_stats(vals)
        assert st_.mean == pytest.approx(vals.mean(), abs=1e-12)
        assert st_.std == pytest.approx(vals.std(), abs=1e-12)
        assert st_.skewness == pytest.approx(
            scipy.stats.skew(vals, bias=True), abs=1e-10)
        assert st_.excess_kurtosis == pytest.approx(
            scipy.stats.kurtosis(vals, bias=True), abs=1e-10)

    def test_constant_input_reports_zero_shape_moments(self):
        st_ = ca.distribution_stats([4.0, 4.0], n_bins=8)
        assert st_.std == 0.0
        assert st_.skewness == 0.0
        assert st_.excess_kurtosis == 0.0
        assert st_.histogram == ((4.0, 4.0, 2),)

    def test_histogram_covers_range_and_sums(self, np_rng):
        vals = np_rng.uniform(-3, 5, size=200)
        st_ = ca.distribution_stats(vals, n_bins=13)
        bins = st_.histogram
        assert len(bins) == 13
        assert bins[0][0] == vals.min() and bins[-1][1] == vals.max()
        assert sum(c for _, _, c in bins) == 200
        for (_, hi, _), (lo, _, _) in zip(bins, bins[1:]):
            assert hi == lo

    def test_empty_input(self):
        with pytest.raises(E.EmptyInput):
            ca.distribution_stats([])

    def test_non_finite_input(self):
        with pytest.raises(E.NonFiniteValue):
            ca.distribution_stats([1.0, float("inf")])

    def test_bad_bin_count(self):
        with pytest.raises(E.ConfigError):
            ca.distribution_stats([1.0], n_bins=0)


class TestOffdiagonalValues:
    def test_excludes_diagonal_and_degenerate(self, np_rng):
        vals = np_rng.normal(size=(12, 5))
        vals[:, 1] = 0.0
        sim = ca.pearson_similarity(make_scores(vals))
        off = ca.offdiagonal_values(sim)
        assert off.shape == (4 * 3 // 2,)
        keep = [0, 2, 3, 4]
        want = [sim.values[a, b] for i, a in enumerate(keep)
                for b in keep[i + 1:]]
        assert list(off) == want


# ---------------------------------------------------------------------------
# matrix validation and serialization
# ---------------------------------------------------------------------------

class TestMatrixTypes:
    def test_asymmetric_rejected(self):
        vals = np.eye(2)
        vals[0, 1] = 0.5
        with pytest.raises(E.ConfigError):
            ca.SimilarityMatrix(("a", "b"), vals, "pearson", "logit")

    def test_bad_diagonal_rejected(self):
        vals = np.eye(3) * 0.9
        with pytest.raises(E.ConfigError):
            ca.SimilarityMatrix(("a", "b", "c"), vals, "pearson", "logit")

    def test_out_of_bounds_rejected(self):
        vals = np.eye(2)
        vals[0, 1] = vals[1, 0] = 1.5
        with pytest.raises(E.ConfigError):
            ca.SimilarityMatrix(("a", "b"), vals, "pearson", "logit")

    def test_nan_rejected(self):
        vals = np.eye(2)
        vals[0, 1] = vals[1, 0] = float("nan")
        with pytest.raises(E.ConfigError):
            ca.SimilarityMatrix(("a", "b"), vals, "pearson", "logit")

    def test_negative_counts_rejected(self):
        with pytest.raises(E.ConfigError):
            ca.CountMatrix(("a",), np.array([[-1]]), "confusion")

    def test_asymmetric_cooccurrence_rejected(self):
        with pytest.raises(E.ConfigError):
            ca.CountMatrix(("a", "b"), np.array([[1, 2], [0, 1]]),
                           "cooccurrence")


class TestSerialization:
    def test_similarity_binary_round_trip(self, np_rng):
        vals = np_rng.normal(size=(9, 4))
        vals[:, 3] = 2.0
        sim = ca.pearson_similarity(make_scores(vals))
        back = parse_similarity_binary(write_similarity_binary(sim))
        assert back.values.tobytes() == sim.values.tobytes()
        assert back.class_names == sim.class_names
        assert back.measure == sim.measure
        assert back.source_kind == sim.source_kind
        assert back.degenerate_classes == sim.degenerate_classes

    def test_counts_binary_round_trip(self):
        cm = ca.cooccurrence_matrix(labels_of({"a", "b"}, {"b"}), ("a", "b"))
        back = parse_counts_binary(write_counts_binary(cm))
        assert np.array_equal(back.counts, cm.counts)
        assert back.kind == cm.kind

    def test_wrong_container_kind(self):
        s = make_scores([[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(E.InputError):
            parse_similarity_binary(ca.write_scores_binary(s))

    def test_similarity_csv_is_parseable_square(self, np_rng):
        sim = ca.pearson_similarity(make_scores(np_rng.normal(size=(8, 3))))
        text = write_similarity_csv(sim).decode()
        lines = text.strip().split("\n")
        assert lines[0] == "class,c0,c1,c2"
        assert len(lines) == 4
        assert float(lines[1].split(",")[1]) == 1.0
