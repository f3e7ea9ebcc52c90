import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from mlquant.quantify_base import (Aggregator, DegenerateMatrixWarning, NotConvergedWarning,
                                   acc_correct, cc, estimate_M, pacc_correct, pcc, sld,
                                   sld_step, smooth_train_prevalence)


def random_simplex(rng, n):
    return rng.dirichlet(np.ones(n))


def well_conditioned_M(rng, n):
    # column-stochastic with a dominant diagonal
    M = rng.random((n, n)) * 0.3 + np.eye(n) * 2.0
    return M / M.sum(axis=0)


# cc / pcc --------------------------------------------------------------------

def test_cc_examples():
    assert np.array_equal(cc([0, 0, 1, 1], 2), [0.5, 0.5])
    assert np.array_equal(cc([0, 0, 0], 4), [1, 0, 0, 0])
    with pytest.raises(ValueError):
        cc([], 2)


def test_cc_sums_to_one():
    y = np.random.default_rng(0).integers(0, 7, 999)
    assert cc(y, 7).sum() == pytest.approx(1.0, abs=1e-15)


def test_pcc_examples():
    assert np.allclose(pcc([[0.9, 0.1], [0.7, 0.3]]), [0.8, 0.2])
    assert np.allclose(pcc(np.array([0.1, 0.3])), [0.8, 0.2])
    with pytest.raises(ValueError):
        pcc(np.zeros((0, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(1, 40), st.integers(0, 10_000))
def test_cc_is_pcc_of_one_hot(n, rows, seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n), size=rows)
    hard = P.argmax(1)
    assert np.allclose(cc(hard, n), pcc(np.eye(n)[hard]))
    assert pcc(P).sum() == pytest.approx(1.0)


# misclassification matrix ----------------------------------------------------

def test_estimate_M_perfect_classifier_is_identity():
    y = np.array([0, 1, 2, 2, 1])
    assert np.array_equal(estimate_M(y, y, 3), np.eye(3))


def test_estimate_M_constructed_counts():
    # 10 true negatives (2 predicted positive), 10 true positives (9 predicted positive)
    y = np.r_[np.zeros(10), np.ones(10)].astype(int)
    pred = np.r_[[1, 1], np.zeros(8), np.ones(9), [0]].astype(int)
    M = estimate_M(y, pred, 2)
    assert np.allclose(M, [[0.8, 0.1], [0.2, 0.9]])
    # written as in the rates table: tpr 0.9 and fpr 0.2
    assert M[1, 1] == pytest.approx(0.9) and M[1, 0] == pytest.approx(0.2)


def test_estimate_M_soft_mode_and_missing_class():
    y = np.array([0, 0, 1])
    P = np.array([[0.8, 0.2, 0], [0.6, 0.4, 0], [0.3, 0.7, 0]])
    M = estimate_M(y, P, 3, mode="soft")
    assert np.allclose(M[:, 0], [0.7, 0.3, 0])
    assert np.allclose(M[:, 1], [0.3, 0.7, 0])
    assert np.array_equal(M[:, 2], [0, 0, 1])
    assert np.allclose(M.sum(0), 1.0)


def test_estimate_M_columns_sum_to_one_random():
    rng = np.random.default_rng(1)
    y, pred = rng.integers(0, 5, 300), rng.integers(0, 5, 300)
    assert np.allclose(estimate_M(y, pred, 5).sum(0), 1.0, atol=1e-12)


# ACC / PACC ------------------------------------------------------------------

def test_acc_identity_and_binary_example():
    assert np.allclose(acc_correct([0.3, 0.7], np.eye(2)), [0.3, 0.7])
    M = np.array([[0.9, 0.2], [0.1, 0.8]])
    p = acc_correct([0.48, 0.52], M)
    assert np.allclose(p, [0.4, 0.6], atol=1e-12)
    assert np.allclose(M @ p, [0.48, 0.52], atol=1e-12)


def test_acc_recovers_planted_prevalence():
    rng = np.random.default_rng(2)
    for n in (2, 3, 5, 8):
        for _ in range(20):
            p, M = random_simplex(rng, n), well_conditioned_M(rng, n)
            assert np.max(np.abs(acc_correct(M @ p, M) - p)) <= 1e-9
            assert np.max(np.abs(pacc_correct(M @ p, M) - p)) <= 1e-9


def test_binary_closed_form_matches_least_squares():
    rng = np.random.default_rng(3)
    for _ in range(100):
        M = well_conditioned_M(rng, 2)
        q = random_simplex(rng, 2)
        ls = np.clip(np.linalg.lstsq(M, q, rcond=None)[0], 0, None)
        ls /= ls.sum()
        assert np.allclose(pacc_correct(q, M), ls, atol=1e-9)


def test_adjusted_output_on_simplex_even_out_of_range():
    M = np.array([[0.9, 0.2], [0.1, 0.8]])
    assert np.array_equal(acc_correct([0.95, 0.05], M), [1.0, 0.0])
    M3 = well_conditioned_M(np.random.default_rng(4), 3)
    p = acc_correct([1.0, 0.0, 0.0], M3)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)


def test_degenerate_matrix_falls_back_with_warning():
    with pytest.warns(DegenerateMatrixWarning):
        out = acc_correct([0.3, 0.7], [[0.5, 0.5], [0.5, 0.5]])
    assert np.array_equal(out, [0.3, 0.7])
    with pytest.warns(DegenerateMatrixWarning):
        acc_correct([0.2, 0.3, 0.5], np.ones((3, 3)) / 3)
    with pytest.raises(ValueError):
        acc_correct([0.5, 0.5], np.eye(3))


# SLD -------------------------------------------------------------------------

def test_sld_consistent_posteriors_stop_immediately():
    P = np.array([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]])
    res = sld(P, pcc(P))
    assert res.iterations == 1 and res.converged
    assert np.allclose(res.prevalence, [0.5, 0.5])


@pytest.mark.parametrize("train_prev", [[0.2, 0.8], [0.5, 0.3, 0.2], [0.05, 0.9, 0.05]])
def test_sld_uniform_posteriors_keep_train_prior(train_prev):
    P = np.tile(train_prev, (20, 1))
    assert np.allclose(sld(P, train_prev).prevalence, train_prev)


def test_sld_recovers_shifted_prior_where_pcc_does_not():
    # class-conditional scores N(-1.5, 1) and N(+1.5, 1), calibrated at prior
    # 0.5: P(pos | s) = sigmoid(3 s); test sample drawn at (0.8, 0.2)
    rng = np.random.default_rng(5)
    ests, pccs = [], []
    for _ in range(20):
        y = rng.random(2000) < 0.2
        s = np.where(y, 1.5, -1.5) + rng.normal(size=y.size)
        P = np.column_stack([1 - expit(3 * s), expit(3 * s)])
        ests.append(sld(P, [0.5, 0.5], eps=1e-8).prevalence[0])
        pccs.append(pcc(P)[0])
    assert abs(np.mean(ests) - 0.8) <= 0.03
    assert max(abs(e - 0.8) for e in ests) <= 0.03
    assert np.mean(pccs) < 0.8 - 0.03  # pulled toward the training prior


def test_sld_fixed_point_and_consistency():
    rng = np.random.default_rng(6)
    P = rng.dirichlet(np.ones(4), size=300)
    tp = random_simplex(rng, 4)
    res = sld(P, tp, eps=1e-10)
    again, R = sld_step(P, tp, res.prevalence)
    assert np.abs(again - res.prevalence).max() < 1e-10
    assert np.allclose(R.mean(0), again)


def test_sld_not_converged_flag():
    rng = np.random.default_rng(7)
    P = rng.dirichlet(np.ones(3) * 0.3, size=100)
    with pytest.warns(NotConvergedWarning):
        res = sld(P, [0.6, 0.3, 0.1], eps=1e-15, max_iter=2)
    assert not res.converged and res.iterations == 2


def test_sld_rejects_zero_train_prior_and_smoothing_fixes_it():
    P = np.array([[0.5, 0.5]])
    with pytest.raises(ValueError):
        sld(P, [1.0, 0.0])
    tp = smooth_train_prevalence([1.0, 0.0])
    assert tp[1] > 0 and tp.sum() == pytest.approx(1.0)
    assert sld(P, tp).converged


# equivariance and the Aggregator ---------------------------------------------

@pytest.mark.parametrize("method", ["cc", "pcc", "acc", "pacc", "sld"])
def test_class_permutation_equivariance(method):
    rng = np.random.default_rng(8)
    n = 4
    y = rng.integers(0, n, 400)
    logits = np.eye(n)[y] * 2 + rng.normal(size=(400, n))
    P = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    test = rng.dirichlet(np.ones(n) * 0.5, size=150)
    perm = rng.permutation(n)
    a = Aggregator(method, n).fit(y, P).aggregate(test)
    inv = np.argsort(perm)
    # new column j is old class perm[j]; old label c becomes inv[c]
    b = Aggregator(method, n).fit(inv[y], P[:, perm]).aggregate(test[:, perm])
    assert np.allclose(b, a[perm], atol=1e-9)


def test_aggregator_outputs_on_simplex_and_round_trip():
    rng = np.random.default_rng(9)
    y = rng.integers(0, 3, 200)
    P = rng.dirichlet(np.ones(3), size=200)
    for m in ("cc", "pcc", "acc", "pacc", "sld"):
        agg = Aggregator(m, 3).fit(y, P)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateMatrixWarning)
            out = agg.aggregate(P[:50])
            again = Aggregator.from_dict(agg.to_dict()).aggregate(P[:50])
        assert np.all(out >= 0) and out.sum() == pytest.approx(1.0)
        assert np.array_equal(out, again)


def test_aggregator_argument_errors():
    with pytest.raises(ValueError):
        Aggregator("hdy")
    with pytest.raises(ValueError):
        Aggregator("acc").fit([0, 1])
    with pytest.raises(ValueError):
        Aggregator("pcc").fit([0, 1]).aggregate(np.zeros((0, 2)))
