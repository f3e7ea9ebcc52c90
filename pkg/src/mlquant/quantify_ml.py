"""Multi-label quantifiers.

Four families, by where class-class correlations are used:

``bc_ba``   independent binary classifiers, one binary quantifier per class
``mlc_ba``  a multi-label classifier (stacking or chain), per-class quantifiers
``bc_mla``  independent classifiers, multi-label aggregation (RQ or LPQ)
``mlc_mla`` multi-label classifier and multi-label aggregation (RQ)

Every quantifier offers ``fit(dataset)`` and ``quantify(X)``. The aggregative
ones split inference into ``predict_scores(X)`` (per-row outputs) and
``aggregate(scores)`` so that many samples of one pool can share a single
classification pass.
"""

import copy
import itertools
import json
import warnings

import numpy as np

from ._rng import derive_seed, stream
from .classify import (BinaryRelevance, ChainClassifier, ConstantClassifier, SingleClassError,
                       SoftmaxLR, StackedClassifier, cv_posteriors, model_from_dict,
                       model_to_dict)
from .dataset import MultiLabelDataset, iterative_stratified_split, true_prevalence
from .protocol import MLAPPParams, default_grid, mlapp_generate
from .quantify_base import Aggregator

__all__ = [
    "ConfigurationError",
    "FAMILIES",
    "RidgeRegressor",
    "KNNRegressor",
    "make_regressor",
    "BinaryAggregationQuantifier",
    "RQQuantifier",
    "LPQQuantifier",
    "kmeans",
    "cluster_classes",
    "lpq_reconstruct",
    "normalize_spec",
    "build_quantifier",
    "fit_bc_ba",
    "fit_mlc_ba",
    "fit_rq",
    "rq_quantify",
    "fit_lpq",
    "lpq_quantify",
    "quantifier_to_dict",
    "quantifier_from_dict",
    "save_pipeline",
    "load_pipeline",
]

FAMILIES = ("bc_ba", "mlc_ba", "bc_mla", "mlc_mla")
PIPELINE_FORMAT = "mlquant-pipeline"
PIPELINE_VERSION = 1


class ConfigurationError(ValueError):
    """A pipeline cannot be built or trained as configured."""


# --------------------------------------------------------------------------
# regressors
# --------------------------------------------------------------------------

class RidgeRegressor:
    """Multi-output ridge regression with an unpenalised intercept.

    Solved in closed form on centred data,
    ``beta = (Xc^T Xc + alpha I)^+ Xc^T Yc``; with ``alpha = 0`` this is
    ordinary least squares (minimum-norm when rank deficient).
    """

    def __init__(self, alpha=1.0):
        self.alpha = float(alpha)

    def fit(self, inputs, targets):
        X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
        Xc, Yc = X - x_mean, Y - y_mean
        G = Xc.T @ Xc + self.alpha * np.eye(X.shape[1])
        self.coef_ = np.linalg.lstsq(G, Xc.T @ Yc, rcond=None)[0]
        self.intercept_ = y_mean - x_mean @ self.coef_
        return self

    def predict(self, v):
        v = np.asarray(v, dtype=np.float64)
        return v @ self.coef_ + self.intercept_

    def to_dict(self):
        return {"kind": "ridge", "alpha": self.alpha, "coef": self.coef_.tolist(),
                "intercept": self.intercept_.tolist()}

    @classmethod
    def from_dict(cls, d):
        r = cls(d["alpha"])
        r.coef_ = np.asarray(d["coef"])
        r.intercept_ = np.asarray(d["intercept"])
        return r


class KNNRegressor:
    """Mean target of the ``k`` nearest training inputs (Euclidean, ties by index)."""

    def __init__(self, k=5):
        self.k = int(k)

    def fit(self, inputs, targets):
        self.inputs_ = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        self.targets_ = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        return self

    def predict(self, v):
        v = np.asarray(v, dtype=np.float64)
        V = np.atleast_2d(v)
        d2 = ((V[:, None, :] - self.inputs_[None, :, :]) ** 2).sum(axis=2)
        k = min(self.k, self.inputs_.shape[0])
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out = self.targets_[nearest].mean(axis=1)
        return out[0] if v.ndim == 1 else out

    def to_dict(self):
        return {"kind": "knn", "k": self.k, "inputs": self.inputs_.tolist(),
                "targets": self.targets_.tolist()}

    @classmethod
    def from_dict(cls, d):
        r = cls(d["k"])
        r.inputs_ = np.asarray(d["inputs"])
        r.targets_ = np.asarray(d["targets"])
        return r


def make_regressor(spec):
    """Build an unfitted regressor from ``{"kind": "ridge", "alpha": ...}`` or
    ``{"kind": "knn", "k": ...}``."""
    spec = dict(spec or {"kind": "ridge"})
    kind = spec.pop("kind", "ridge")
    if kind == "ridge":
        return RidgeRegressor(**spec)
    if kind == "knn":
        return KNNRegressor(**spec)
    raise ConfigurationError(f"unknown regressor kind {kind!r}")


def _regressor_from_dict(d):
    return {"ridge": RidgeRegressor, "knn": KNNRegressor}[d["kind"]].from_dict(d)


# --------------------------------------------------------------------------
# binary aggregation (bc_ba, mlc_ba)
# --------------------------------------------------------------------------

def make_classifier(kind, c=1.0, class_weight=None, normalize=False, chain_order=None,
                    folds=5, seed=0):
    if kind == "independent_binary":
        return BinaryRelevance(c=c, class_weight=class_weight)
    if kind == "stacked":
        return StackedClassifier(c=c, class_weight=class_weight, normalize=normalize,
                                 folds=folds, seed=seed)
    if kind == "chain":
        return ChainClassifier(order=chain_order, c=c, class_weight=class_weight)
    raise ConfigurationError(f"unknown classifier kind {kind!r}")


class BinaryAggregationQuantifier:
    """``n`` binary quantifiers over the per-class outputs of one classifier.

    ``classifier`` is a kind (``"independent_binary"``, ``"stacked"``,
    ``"chain"``) or a zero-argument factory returning an unfitted classifier
    with ``fit(X, Y)`` / ``predict_proba(X)``. Each class's quantifier only
    looks at its own column of posteriors. ACC and PACC estimate their
    misclassification rates from ``folds``-fold out-of-fold posteriors of
    the whole classifier.
    """

    def __init__(self, classifier="independent_binary", base_method="pcc", c=1.0,
                 class_weight=None, normalize=False, chain_order=None, folds=5, seed=0):
        self.classifier = classifier
        self.base_method = base_method
        self.c = c
        self.class_weight = class_weight
        self.normalize = normalize
        self.chain_order = chain_order
        self.folds = folds
        self.seed = seed

    def _new_classifier(self):
        if callable(self.classifier):
            return self.classifier()
        return make_classifier(self.classifier, self.c, self.class_weight, self.normalize,
                               self.chain_order, self.folds, derive_seed(self.seed, "stack"))

    @property
    def family(self):
        return "bc_ba" if self.classifier == "independent_binary" else "mlc_ba"

    def fit(self, dataset):
        X, Y = dataset.features, dataset.labels
        self.n_classes_ = Y.shape[1]
        self.classifier_ = self._new_classifier().fit(X, Y)
        self.aggregators_ = [Aggregator(self.base_method, 2) for _ in range(self.n_classes_)]
        heldout = None
        if self.aggregators_[0].needs_heldout:
            heldout = cv_posteriors(X, Y, lambda Xt, Yt: self._new_classifier().fit(Xt, Yt),
                                    folds=min(self.folds, Y.shape[0]),
                                    seed=derive_seed(self.seed, "heldout"))
        for i, agg in enumerate(self.aggregators_):
            agg.fit(Y[:, i], None if heldout is None else heldout[:, i])
        return self

    def predict_scores(self, X):
        return self.classifier_.predict_proba(X)

    def aggregate(self, scores):
        S = np.asarray(scores, dtype=np.float64)
        return np.array([agg.aggregate(S[:, i])[1] for i, agg in enumerate(self.aggregators_)])

    def quantify(self, X):
        return self.aggregate(self.predict_scores(X))

    def to_dict(self):
        if callable(self.classifier):
            raise ConfigurationError("custom classifier factories cannot be serialised")
        return {"type": "binary_aggregation", "classifier": self.classifier,
                "base_method": self.base_method, "c": _plain(self.c),
                "class_weight": _plain(self.class_weight), "normalize": self.normalize,
                "chain_order": self.chain_order, "folds": self.folds, "seed": self.seed,
                "n_classes": self.n_classes_, "model": model_to_dict(self.classifier_),
                "aggregators": [a.to_dict() for a in self.aggregators_]}

    @classmethod
    def from_dict(cls, d):
        q = cls(d["classifier"], d["base_method"], d["c"], d["class_weight"], d["normalize"],
                d["chain_order"], d["folds"], d["seed"])
        q.n_classes_ = d["n_classes"]
        q.classifier_ = model_from_dict(d["model"])
        q.aggregators_ = [Aggregator.from_dict(a) for a in d["aggregators"]]
        return q


# --------------------------------------------------------------------------
# regression-based aggregation (RQ)
# --------------------------------------------------------------------------

class RQQuantifier:
    """Regression correction of a multi-label quantifier's estimates.

    The training set is split (iterative stratification) into a part for
    the base quantifier and a ``split_fraction`` part from which ML-APP
    samples are drawn. The base quantifier's estimates on those samples,
    paired with their true prevalences, train a multi-output regressor;
    at inference its output is clipped to [0, 1].

    ``base`` can be any unfitted quantifier with ``fit(dataset)`` and
    ``quantify(X)``; the regressor never sees per-row predictions.
    """

    def __init__(self, base, regressor=None, split_fraction=0.4, mlapp=None, seed=0):
        self.base = base
        self.regressor = regressor if regressor is not None else RidgeRegressor(1.0)
        self.split_fraction = split_fraction
        self.mlapp = mlapp if mlapp is not None else MLAPPParams(k=100, m=1, grid=default_grid())
        self.seed = seed

    @property
    def family(self):
        return "mlc_mla" if getattr(self.base, "family", "bc_ba") == "mlc_ba" else "bc_mla"

    def _base_estimates(self, X, samples):
        if hasattr(self.base, "predict_scores"):
            S = self.base.predict_scores(X)
            return np.array([self.base.aggregate(S[s.indices]) for s in samples])
        return np.array([self.base.quantify(X[s.indices]) for s in samples])

    def fit(self, dataset):
        if not 0 < self.split_fraction < 1:
            raise ConfigurationError("split_fraction must lie in (0, 1)")
        part_q, part_r = iterative_stratified_split(
            dataset, [1 - self.split_fraction, self.split_fraction],
            seed=derive_seed(self.seed, "rq_split"))
        train_q, train_r = dataset.subset(part_q), dataset.subset(part_r)
        params = MLAPPParams(self.mlapp.k, self.mlapp.m, self.mlapp.grid,
                             derive_seed(self.seed, "rq_mlapp"))
        if params.k > train_r.n_rows:
            raise ConfigurationError(
                f"ML-APP sample size {params.k} exceeds the {train_r.n_rows} rows "
                "held out for the regressor")
        samples = mlapp_generate(train_r, params)
        if not samples:
            raise ConfigurationError("ML-APP produced no samples for the regressor")
        self.base.fit(train_q)
        est = self._base_estimates(train_r.features, samples)
        true = np.array([s.true_prevalence for s in samples])
        self.regressor.fit(est, true)
        self.n_classes_ = dataset.n_classes
        self.n_regression_samples_ = len(samples)
        return self

    def predict_scores(self, X):
        return self.base.predict_scores(X)

    def correct(self, estimate):
        """Map a base estimate through the regressor and clip to [0, 1]."""
        return np.clip(self.regressor.predict(estimate), 0.0, 1.0)

    def aggregate(self, scores):
        return self.correct(self.base.aggregate(scores))

    def quantify(self, X):
        return self.correct(self.base.quantify(X))

    def to_dict(self):
        return {"type": "rq", "split_fraction": self.split_fraction,
                "mlapp": {"k": self.mlapp.k, "m": self.mlapp.m, "grid": list(self.mlapp.grid),
                          "seed": self.mlapp.seed},
                "seed": self.seed, "n_classes": self.n_classes_,
                "base": quantifier_to_dict(self.base),
                "regressor": self.regressor.to_dict()}

    @classmethod
    def from_dict(cls, d):
        q = cls(quantifier_from_dict(d["base"]), _regressor_from_dict(d["regressor"]),
                d["split_fraction"], MLAPPParams(**d["mlapp"]), d["seed"])
        q.n_classes_ = d["n_classes"]
        return q


# --------------------------------------------------------------------------
# label-powerset aggregation (LPQ)
# --------------------------------------------------------------------------

def kmeans(points, k, seed=0, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding; returns a label per point.

    An empty cluster is re-seeded with the point farthest from its current
    centroid. Every one of the ``k`` clusters is non-empty on return.
    """
    P = np.asarray(points, dtype=np.float64)
    n = P.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    rng = stream(seed, "kmeans")
    centers = [int(rng.integers(n))]
    d2 = ((P - P[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        free = np.setdiff1d(np.arange(n), centers)
        w = d2[free]
        nxt = rng.choice(free, p=w / w.sum()) if w.sum() > 0 else rng.choice(free)
        centers.append(int(nxt))
        d2 = np.minimum(d2, ((P - P[nxt]) ** 2).sum(axis=1))
    C = P[centers].copy()
    labels = np.full(n, -1)
    for _ in range(max_iter):
        dist = ((P[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        new = dist.argmin(axis=1)
        _fill_empty(new, dist, k)
        if np.array_equal(new, labels):
            break
        labels = new
        C = np.stack([P[labels == j].mean(axis=0) for j in range(k)])
    return labels


def _fill_empty(labels, dist, k):
    for j in range(k):
        if np.any(labels == j):
            continue
        counts = np.bincount(labels, minlength=k)
        movable = counts[labels] > 1
        own = dist[np.arange(labels.size), labels]
        far = np.flatnonzero(movable)[np.argmax(own[movable])]
        labels[far] = j


def cluster_classes(dataset, method="kmeans", k_clusters=2, seed=0):
    """Partition class ids into ``k_clusters`` disjoint groups.

    ``"random"`` shuffles the classes and cuts them into near-equal groups;
    ``"kmeans"`` clusters classes represented as binary vectors over the
    training rows. Groups are returned sorted, ordered by smallest member.
    """
    Y = dataset.labels if isinstance(dataset, MultiLabelDataset) else np.asarray(dataset)
    n = Y.shape[1]
    if not 1 <= k_clusters <= n:
        raise ValueError(f"k_clusters must lie in [1, {n}], got {k_clusters}")
    if method == "random":
        perm = stream(seed, "random_clusters").permutation(n)
        groups = [sorted(int(i) for i in g) for g in np.array_split(perm, k_clusters)]
    elif method == "kmeans":
        labels = kmeans(Y.T.astype(np.float64), k_clusters, seed=seed)
        groups = [sorted(int(i) for i in np.flatnonzero(labels == j)) for j in range(k_clusters)]
    else:
        raise ValueError(f"unknown clustering method {method!r}")
    return sorted(groups, key=lambda g: g[0])


def lpq_reconstruct(synthetic_prevalence, A):
    """Per-class prevalence from synthetic-class prevalence: ``p^T A``."""
    return np.asarray(synthetic_prevalence, dtype=np.float64) @ np.asarray(A, dtype=np.float64)


def _fit_powerset_model(X, y, n_classes, c, class_weight):
    try:
        return SoftmaxLR(c=c, class_weight=class_weight).fit(X, y, n_classes=n_classes)
    except SingleClassError:
        rate = np.bincount(y, minlength=n_classes) / y.size
        rate = np.clip(rate, 1e-4, 1.0)
        return ConstantClassifier(rate / rate.sum(), X.shape[1])


class LPQQuantifier:
    """Label-powerset quantification over clusters of classes.

    Within each cluster every observed labelset (the empty one included)
    becomes a synthetic class; a single-label quantifier (softmax logistic
    regression plus ``base_method``) estimates synthetic prevalences, which
    are mapped back to classes through the 0/1 assignment matrix ``A``.

    ``clusters`` fixes the partition; otherwise it is computed at fit time
    with :func:`cluster_classes` (``clustering`` and ``k_clusters``).
    """

    def __init__(self, clusters=None, clustering="kmeans", k_clusters=2, base_method="pcc",
                 c=1.0, class_weight=None, folds=5, seed=0):
        self.clusters = clusters
        self.clustering = clustering
        self.k_clusters = k_clusters
        self.base_method = base_method
        self.c = c
        self.class_weight = class_weight
        self.folds = folds
        self.seed = seed

    family = "bc_mla"

    def fit(self, dataset):
        X, Y = dataset.features, dataset.labels
        n = Y.shape[1]
        clusters = self.clusters
        if clusters is None:
            clusters = cluster_classes(dataset, self.clustering, min(self.k_clusters, n),
                                       seed=derive_seed(self.seed, "clusters"))
        clusters = [sorted(int(i) for i in g) for g in clusters]
        flat = sorted(itertools.chain.from_iterable(clusters))
        if flat != list(range(n)):
            raise ConfigurationError("clusters must partition the classes")
        self.n_classes_ = n
        self.clusters_ = clusters
        self.assignments_, self.models_, self.aggregators_ = [], [], []
        for ci, group in enumerate(clusters):
            A, y = np.unique(Y[:, group], axis=0, return_inverse=True)
            y = y.ravel()
            k = A.shape[0]
            model = _fit_powerset_model(X, y, k, self.c, self.class_weight)
            agg = Aggregator(self.base_method, k)
            heldout = None
            if agg.needs_heldout and k > 1:
                heldout = cv_posteriors(
                    X, np.eye(k, dtype=np.uint8)[y],
                    lambda Xt, Yt: _fit_powerset_model(Xt, Yt.argmax(axis=1), k, self.c,
                                                       self.class_weight),
                    folds=min(self.folds, y.size), seed=derive_seed(self.seed, "heldout", ci))
            elif agg.needs_heldout:
                heldout = np.ones((y.size, 1))
            agg.fit(y, heldout)
            self.assignments_.append(A.astype(np.uint8))
            self.models_.append(model)
            self.aggregators_.append(agg)
        return self

    def predict_scores(self, X):
        return np.hstack([m.predict_proba(X) for m in self.models_])

    def synthetic_estimates(self, scores):
        """Per-cluster prevalence estimates over the synthetic classes."""
        S = np.asarray(scores, dtype=np.float64)
        out, start = [], 0
        for A, agg in zip(self.assignments_, self.aggregators_):
            k = A.shape[0]
            out.append(agg.aggregate(S[:, start:start + k]))
            start += k
        return out

    def aggregate(self, scores):
        p = np.zeros(self.n_classes_)
        for group, A, est in zip(self.clusters_, self.assignments_, self.synthetic_estimates(scores)):
            p[group] = lpq_reconstruct(est, A)
        return p

    def quantify(self, X):
        return self.aggregate(self.predict_scores(X))

    def to_dict(self):
        return {"type": "lpq", "clustering": self.clustering, "k_clusters": self.k_clusters,
                "base_method": self.base_method, "c": self.c,
                "class_weight": self.class_weight, "folds": self.folds, "seed": self.seed,
                "n_classes": self.n_classes_, "clusters": self.clusters_,
                "assignments": [A.tolist() for A in self.assignments_],
                "models": [model_to_dict(m) for m in self.models_],
                "aggregators": [a.to_dict() for a in self.aggregators_]}

    @classmethod
    def from_dict(cls, d):
        q = cls(d["clusters"], d["clustering"], d["k_clusters"], d["base_method"], d["c"],
                d["class_weight"], d["folds"], d["seed"])
        q.n_classes_ = d["n_classes"]
        q.clusters_ = d["clusters"]
        q.assignments_ = [np.asarray(A, dtype=np.uint8) for A in d["assignments"]]
        q.models_ = [model_from_dict(m) for m in d["models"]]
        q.aggregators_ = [Aggregator.from_dict(a) for a in d["aggregators"]]
        return q


# --------------------------------------------------------------------------
# pipeline specs
# --------------------------------------------------------------------------

SPEC_DEFAULTS = {
    "name": None,
    "family": "bc_ba",
    "classifier": None,
    "base_method": "pcc",
    "aggregator": None,
    "c": 1.0,
    "class_weight": None,
    "normalize": False,
    "chain_order": None,
    "folds": 5,
    "regressor": {"kind": "ridge", "alpha": 1.0},
    "rq_split": 0.4,
    "rq_mlapp": {"k": 100, "m": 1, "grid_step": 0.05},
    "clustering": {"method": "kmeans", "k_clusters": 2},
    "seed": 0,
}


def normalize_spec(spec):
    """Fill defaults into a pipeline spec and check that the parts fit together.

    Dotted keys (``"regressor.alpha"``) address nested fields; grid search
    uses them to override single hyperparameters.
    """
    out = copy.deepcopy(SPEC_DEFAULTS)
    for key, value in (spec or {}).items():
        if "." in key:
            outer, inner = key.split(".", 1)
            if outer not in out or not isinstance(out[outer], dict):
                raise ConfigurationError(f"unknown nested key {key!r}")
            out[outer] = dict(out[outer], **{inner: value})
        elif key not in out:
            raise ConfigurationError(f"unknown pipeline key {key!r}")
        elif key == "regressor" and isinstance(value, dict) and \
                value.get("kind", "ridge") != out[key].get("kind"):
            out[key] = dict(value)
        elif isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = dict(out[key], **value)
        else:
            out[key] = value
    fam = out["family"]
    if fam not in FAMILIES:
        raise ConfigurationError(f"unknown family {fam!r}")
    if out["classifier"] is None:
        out["classifier"] = "independent_binary" if fam.startswith("bc_") else "stacked"
    if out["aggregator"] is None:
        out["aggregator"] = "per_class_binary" if fam.endswith("_ba") else "rq"
    clf, agg = out["classifier"], out["aggregator"]
    if fam.startswith("bc_") and clf != "independent_binary":
        raise ConfigurationError(f"{fam} requires independent binary classifiers")
    if fam.startswith("mlc_") and clf not in ("stacked", "chain"):
        raise ConfigurationError(f"{fam} requires a stacked or chain classifier")
    if fam.endswith("_ba") and agg != "per_class_binary":
        raise ConfigurationError(f"{fam} uses per-class binary aggregation")
    if fam.endswith("_mla") and agg not in ("rq", "lpq"):
        raise ConfigurationError(f"{fam} needs an rq or lpq aggregator")
    if fam == "mlc_mla" and agg == "lpq":
        raise ConfigurationError("lpq brings its own label-powerset classifier; use bc_mla")
    if out["name"] is None:
        parts = [fam, out["base_method"]]
        if clf == "chain":
            parts.append("chain")
        if agg == "rq":
            parts.append(f"rq-{out['regressor'].get('kind', 'ridge')}")
        elif agg == "lpq":
            parts.append(f"lpq-{out['clustering'].get('method', 'kmeans')}")
        out["name"] = "+".join(parts)
    return out


def _mlapp_from_spec(d, seed):
    grid = d.get("grid")
    if grid is None:
        grid = default_grid(d.get("grid_step", 0.05))
    return MLAPPParams(k=int(d.get("k", 100)), m=int(d.get("m", 1)), grid=tuple(grid), seed=seed)


def build_quantifier(spec):
    """An unfitted quantifier for a (normalised or partial) pipeline spec."""
    s = normalize_spec(spec)
    seed = int(s["seed"])
    if s["aggregator"] == "lpq":
        cl = s["clustering"]
        return LPQQuantifier(clusters=cl.get("clusters"), clustering=cl.get("method", "kmeans"),
                             k_clusters=int(cl.get("k_clusters", 2)),
                             base_method=s["base_method"], c=s["c"],
                             class_weight=s["class_weight"], folds=s["folds"], seed=seed)
    base = BinaryAggregationQuantifier(
        classifier=s["classifier"], base_method=s["base_method"], c=s["c"],
        class_weight=s["class_weight"], normalize=s["normalize"],
        chain_order=s["chain_order"], folds=s["folds"], seed=derive_seed(seed, "base"))
    if s["aggregator"] == "per_class_binary":
        return base
    return RQQuantifier(base, make_regressor(s["regressor"]), split_fraction=s["rq_split"],
                        mlapp=_mlapp_from_spec(s["rq_mlapp"], seed), seed=seed)


# functional entry points ---------------------------------------------------

def fit_bc_ba(dataset, base_method="pcc", c=1.0, class_weight=None, seed=0):
    return BinaryAggregationQuantifier("independent_binary", base_method, c, class_weight,
                                       seed=seed).fit(dataset)


def fit_mlc_ba(dataset, classifier_kind="stacked", base_method="pcc", c=1.0,
               class_weight=None, normalize=False, chain_order=None, seed=0):
    return BinaryAggregationQuantifier(classifier_kind, base_method, c, class_weight,
                                       normalize, chain_order, seed=seed).fit(dataset)


def fit_rq(dataset, base, regressor=None, mlapp=None, split_fraction=0.4, seed=0):
    if isinstance(regressor, dict):
        regressor = make_regressor(regressor)
    return RQQuantifier(base, regressor, split_fraction, mlapp, seed).fit(dataset)


def rq_quantify(model, X):
    return model.quantify(X)


def fit_lpq(dataset, clusters, base_method="pcc", c=1.0, class_weight=None, seed=0):
    return LPQQuantifier(clusters=clusters, base_method=base_method, c=c,
                         class_weight=class_weight, seed=seed).fit(dataset)


def lpq_quantify(model, X):
    return model.quantify(X)


# serialisation -------------------------------------------------------------

def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return v


_QUANTIFIERS = {"binary_aggregation": BinaryAggregationQuantifier, "rq": RQQuantifier,
                "lpq": LPQQuantifier}


def quantifier_to_dict(q):
    return q.to_dict()


def quantifier_from_dict(d):
    try:
        cls = _QUANTIFIERS[d["type"]]
    except KeyError:
        raise ValueError(f"unknown quantifier type {d.get('type')!r}") from None
    return cls.from_dict(d)


def save_pipeline(quantifier, spec, path, class_names=None, extra=None):
    """Write a fitted pipeline (spec + fitted state) as one JSON document."""
    doc = {"format": PIPELINE_FORMAT, "version": PIPELINE_VERSION,
           "spec": normalize_spec(spec), "class_names": list(class_names or []),
           "state": quantifier_to_dict(quantifier)}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_pipeline(path):
    """Return ``(quantifier, document)`` from :func:`save_pipeline` output."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != PIPELINE_FORMAT:
        raise ValueError("not a pipeline document")
    if doc.get("version") != PIPELINE_VERSION:
        raise ValueError(f"unsupported pipeline version {doc.get('version')!r}")
    return quantifier_from_dict(doc["state"]), doc
