import numpy as np
import pytest
from scipy.stats import norm

from mlquant.synth import CorrelationSpec, SyntheticSpecError, synth_generate


def test_zero_correlation_gives_uncorrelated_labels():
    ds = synth_generate(5, 20_000, 4, correlation=0.0, seed=1)
    C = np.corrcoef(ds.labels.T.astype(float))
    off = C[~np.eye(5, dtype=bool)]
    assert np.all(np.abs(off) <= 0.03)


def test_copy_relation_gives_identical_columns():
    ds = synth_generate(3, 1000, 4, correlation={"rho": 0.2, "copies": {"1": 0}}, seed=2)
    assert np.array_equal(ds.labels[:, 0], ds.labels[:, 1])
    assert ds.metadata["planted_prevalence"][1] == ds.metadata["planted_prevalence"][0]


@pytest.mark.parametrize("rho", [0.0, 0.5])
def test_planted_marginals_are_reproduced(rho):
    ds = synth_generate(4, 20_000, 4, correlation=rho, seed=3)
    assert np.all(np.abs(ds.labels.mean(0) - 0.3) <= 0.01)
    assert ds.metadata["planted_prevalence"] == [0.3] * 4


def test_explicit_prevalences():
    ds = synth_generate(3, 10_000, 4, prevalences=[0.3, 0.3, 0.6], seed=4)
    assert np.all(np.abs(ds.labels.mean(0) - [0.3, 0.3, 0.6]) <= 0.02)


def test_positive_rho_correlates_within_groups_only():
    ds = synth_generate(4, 20_000, 4, correlation={"rho": 0.6, "groups": [[0, 1], [2, 3]]},
                        seed=5)
    C = np.corrcoef(ds.labels.T.astype(float))
    assert C[0, 1] > 0.2 and C[2, 3] > 0.2
    assert abs(C[0, 2]) <= 0.03 and abs(C[1, 3]) <= 0.03


def test_union_marginal_is_exact():
    # independent sources: P(y0 or y1) = 1 - (1 - p0)(1 - p1)
    ds = synth_generate(3, 20_000, 4, correlation={"rho": 0.0, "unions": {"2": [0, 1]}},
                        prevalences=0.3, seed=6)
    assert ds.metadata["planted_prevalence"][2] == pytest.approx(1 - 0.7 * 0.7, abs=1e-12)
    assert np.array_equal(ds.labels[:, 2], ds.labels[:, :2].max(1))
    assert abs(ds.labels[:, 2].mean() - 0.51) <= 0.01
    # correlated sources: the bivariate normal orthant probability
    ds = synth_generate(3, 50_000, 2, correlation={"rho": 0.5, "unions": {"2": [0, 1]}},
                        seed=7)
    p2 = ds.metadata["planted_prevalence"][2]
    t = norm.ppf(0.7)
    mc = np.random.default_rng(0).multivariate_normal([0, 0], [[1, .5], [.5, 1]], 400_000)
    assert p2 == pytest.approx(1 - np.mean((mc < t).all(1)), abs=3e-3)
    assert abs(ds.labels[:, 2].mean() - p2) <= 0.01


def test_features_carry_class_signal():
    ds = synth_generate(2, 4000, 6, separation=[3.0, 0.0], seed=8)
    X = ds.features.toarray()
    gap0 = np.linalg.norm(X[ds.labels[:, 0] == 1].mean(0) - X[ds.labels[:, 0] == 0].mean(0))
    gap1 = np.linalg.norm(X[ds.labels[:, 1] == 1].mean(0) - X[ds.labels[:, 1] == 0].mean(0))
    assert gap0 == pytest.approx(3.0, abs=0.2)
    assert gap1 < 0.3


def test_deterministic_and_seeded():
    a = synth_generate(3, 200, 4, correlation=0.3, seed=9)
    b = synth_generate(3, 200, 4, correlation=0.3, seed=9)
    c = synth_generate(3, 200, 4, correlation=0.3, seed=10)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.features.toarray(), b.features.toarray())
    assert not np.array_equal(a.labels, c.labels)
    assert a.class_names == ("y0", "y1", "y2")
    assert synth_generate(2, 5, 1, class_names=["a", "b"]).class_names == ("a", "b")


@pytest.mark.parametrize("kwargs", [
    dict(correlation=1.0),
    dict(correlation=-0.1),
    dict(prevalences=[0.3, 0.0, 0.3]),
    dict(prevalences=1.0),
    dict(correlation={"rho": 0.2, "groups": [[0, 1]]}),
    dict(correlation={"rho": 0.2, "groups": [[0, 1], [1, 2]]}),
    dict(correlation={"copies": {"1": 1}}),
    dict(correlation={"copies": {"1": 5}}),
    dict(correlation={"copies": {"1": 0, "2": 1}}),
    dict(correlation={"unions": {"2": []}}),
    dict(correlation={"copies": {"2": 0}, "unions": {"2": [0, 1]}}),
    dict(correlation={"copies": {"1": 0}}, prevalences=[0.3, 0.4, 0.3]),
    dict(n_rows=0),
])
def test_infeasible_configs(kwargs):
    with pytest.raises(SyntheticSpecError):
        synth_generate(**dict(dict(n_classes=3, n_rows=10, d=2), **kwargs))


def test_correlation_spec_coercion():
    assert CorrelationSpec.coerce(None).rho == 0.0
    assert CorrelationSpec.coerce(0.4).rho == 0.4
    spec = CorrelationSpec.coerce({"rho": 0.1, "copies": {"1": 0}})
    assert CorrelationSpec.coerce(spec) is spec
    assert spec.to_dict()["copies"] == {"1": 0}
    assert spec.derived == {1}
