import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlquant.dataset import (DatasetFormatError, MultiLabelDataset, dataset_stats,
                             iterative_stratified_split, load_dataset,
                             parse_svmlight_multilabel, remove_rare_classes, save_dataset,
                             stats_csv, true_prevalence)
from mlquant.synth import synth_generate

from conftest import make_dataset, random_labels


# parsing ---------------------------------------------------------------------

def test_parse_labels_and_features():
    ds = parse_svmlight_multilabel(["0,2 1:0.5 3:1.0\n"])
    assert ds.labels.tolist() == [[1, 0, 1]]
    assert ds.features.toarray().tolist() == [[0.0, 0.5, 0.0, 1.0]]


def test_parse_empty_label_field_gives_zero_label_row():
    ds = parse_svmlight_multilabel(["0 0:1\n", " 1:0.5\n"])
    assert ds.labels.tolist() == [[1], [0]]
    assert ds.features[1, 1] == 0.5


def test_three_row_file_has_three_rows(tmp_path):
    path = tmp_path / "d.txt"
    path.write_text("0 0:1\n1 1:1\n0,1 2:3\n")
    assert load_dataset(str(path)).n_rows == 3


def test_header_fixes_dimensions():
    ds = parse_svmlight_multilabel(["2 6 4\n", "0 1:1\n", "1 2:1\n"])
    assert (ds.n_rows, ds.n_features, ds.n_classes) == (2, 6, 4)


@pytest.mark.parametrize("line", ["0 1:abc\n", "0 1-2\n", "x 1:1\n", "0 :1\n"])
def test_malformed_line_reports_line_number(line):
    with pytest.raises(DatasetFormatError) as err:
        parse_svmlight_multilabel(["0 0:1\n", line])
    assert err.value.lineno == 2
    assert "2" in str(err.value)


def test_label_beyond_declared_count_is_an_error():
    with pytest.raises(DatasetFormatError):
        parse_svmlight_multilabel(["2 3 2\n", "0 0:1\n", "2 1:1\n"])


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_dataset("/nonexistent/file.txt")


def test_round_trip_is_idempotent(tmp_path):
    Y = random_labels(30, 4, seed=1)
    Y[3] = 0
    X = np.random.default_rng(2).normal(size=(30, 6))
    X[3] = 0.0
    X[X < -1] = 0.0
    ds = make_dataset(Y, X)
    buf = io.StringIO()
    save_dataset(ds, buf)
    again = parse_svmlight_multilabel(buf.getvalue().splitlines(True))
    assert np.array_equal(again.labels, ds.labels)
    assert np.array_equal(again.features.toarray(), ds.features.toarray())
    buf2 = io.StringIO()
    save_dataset(again, buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_dataset_invariants():
    with pytest.raises(ValueError):
        make_dataset([[0, 2]])
    with pytest.raises(ValueError):
        MultiLabelDataset(make_dataset([[0, 1]]).features, np.array([[0, 1]], np.uint8),
                          ("a", "a"), {})
    ds = make_dataset([[0, 0]])  # an all-zero row is legal
    assert ds.labels.sum() == 0


# prevalence ------------------------------------------------------------------

def test_true_prevalence_counts():
    ds = make_dataset([[1, 0], [1, 1], [0, 0], [0, 1]])
    assert np.allclose(true_prevalence(ds, [0, 1, 2, 3]), [0.5, 0.5])
    assert true_prevalence(ds, [0, 1])[0] == 1.0


def test_true_prevalence_empty_sample():
    with pytest.raises(ValueError):
        true_prevalence(make_dataset([[1]]), [])


def test_true_prevalence_matches_planted_marginals():
    ds = synth_generate(3, 10000, 4, correlation=0.3, prevalences=[0.3, 0.3, 0.6], seed=5)
    assert np.allclose(true_prevalence(ds, np.arange(ds.n_rows)), [0.3, 0.3, 0.6], atol=0.02)


def test_prevalence_of_whole_is_weighted_mean_of_parts():
    Y = random_labels(97, 5, seed=3)
    ds = make_dataset(Y)
    parts = iterative_stratified_split(ds, [0.5, 0.3, 0.2], seed=1)
    weighted = sum(p.size * true_prevalence(ds, p) for p in parts) / ds.n_rows
    assert np.allclose(weighted, ds.prevalence(), atol=1e-12)


# stats -----------------------------------------------------------------------

def test_stats_cardinality():
    st_ = dataset_stats(make_dataset([[1, 0, 0], [1, 1, 0], [1, 1, 1]]))
    assert st_.card == 2.0
    assert abs(st_.dens * 3 - st_.card) < 1e-12


def test_stats_diversity():
    st_ = dataset_stats(make_dataset([[1, 0], [1, 0], [0, 1]]))
    assert st_.div == 2
    assert st_.norm_div == 1.0
    assert st_.p_max == pytest.approx(2 / 3)
    assert st_.p_uniq == pytest.approx(1 / 3)


def test_stats_csv_columns():
    text = stats_csv(make_dataset([[1, 0], [0, 1], [1, 1]]))
    header, row = text.strip().splitlines()
    assert header == "Classes,Train,Test,Features,Card,Dens,Div,NormDiv,PUniq,PMax"
    assert row.split(",")[:2] == ["2", "3"]


# stratification --------------------------------------------------------------

def test_single_part_holds_every_row():
    ds = make_dataset(random_labels(20, 3))
    (part,) = iterative_stratified_split(ds, [1.0])
    assert part.tolist() == list(range(20))


def test_ten_rows_one_label_halves():
    Y = np.zeros((10, 1), np.uint8)
    Y[[1, 4, 6, 9]] = 1
    a, b = iterative_stratified_split(make_dataset(Y), [0.5, 0.5], seed=0)
    assert Y[a].sum() == 2 and Y[b].sum() == 2
    assert a.size == 5 and b.size == 5


def test_fifty_rows_five_labels_within_one():
    Y = random_labels(50, 5, density=0.35, seed=11)
    parts = iterative_stratified_split(make_dataset(Y), [0.6, 0.4], seed=4)
    for frac, part in zip([0.6, 0.4], parts):
        assert np.all(np.abs(Y[part].sum(0) - frac * Y.sum(0)) <= 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 80), st.integers(1, 6), st.integers(0, 10_000),
       st.sampled_from([[0.5, 0.5], [0.6, 0.4], [0.2, 0.3, 0.5]]))
def test_split_is_a_partition(n_rows, n_classes, seed, fractions):
    Y = random_labels(n_rows, n_classes, seed=seed)
    parts = iterative_stratified_split(make_dataset(Y), fractions, seed=seed)
    joined = np.concatenate(parts)
    assert sorted(joined.tolist()) == list(range(n_rows))


def test_split_is_deterministic():
    Y = random_labels(60, 4, seed=8)
    a = iterative_stratified_split(make_dataset(Y), [0.7, 0.3], seed=2)
    b = iterative_stratified_split(make_dataset(Y), [0.7, 0.3], seed=2)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.parametrize("fractions", [[0.0, 1.0], [-0.1, 1.1], [0.5, 0.4]])
def test_bad_fractions(fractions):
    with pytest.raises(ValueError):
        iterative_stratified_split(make_dataset(random_labels(10, 2)), fractions)


# rare classes ----------------------------------------------------------------

def _with_counts(counts, n_rows=20):
    Y = np.zeros((n_rows, len(counts)), np.uint8)
    for j, c in enumerate(counts):
        Y[:c, j] = 1
    return make_dataset(Y)


def test_class_with_four_positives_dropped():
    out = remove_rare_classes(_with_counts([4, 6]), 5)
    assert out.class_names == ("y1",)


def test_min_zero_is_identity():
    ds = _with_counts([0, 3, 9])
    out = remove_rare_classes(ds, 0)
    assert np.array_equal(out.labels, ds.labels) and out.class_names == ds.class_names


def test_order_preserved():
    out = remove_rare_classes(_with_counts([10, 4, 7]), 5)
    assert out.class_names == ("y0", "y2")
    assert out.metadata["kept_class_ids"] == [0, 2]


def test_all_removed_is_an_error():
    with pytest.raises(ValueError):
        remove_rare_classes(_with_counts([1, 2]), 5)
