"""Probabilistic classifiers: logistic regression, stacking, chains.

Every multi-label classifier here exposes ``fit(X, Y)`` and
``predict_proba(X)`` returning an ``(n_rows, n_classes)`` matrix of
per-class positive posteriors. Binary models return a 1-d vector of
positive posteriors instead.
"""

import json

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.special import expit, log_softmax, softmax

from .dataset import iterative_stratified_split

__all__ = [
    "SingleClassError",
    "binary_objective",
    "softmax_objective",
    "class_weights",
    "BinaryLR",
    "SoftmaxLR",
    "ConstantClassifier",
    "BinaryRelevance",
    "StackedClassifier",
    "ChainClassifier",
    "train_binary_lr",
    "fit_binary",
    "predict_posterior",
    "cv_posteriors",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "mlquant-model"
MODEL_VERSION = 1
FALLBACK_CLAMP = 1e-4


class SingleClassError(ValueError):
    """Training labels contain a single class; see :func:`fit_binary`."""


def _dense_if_full(X):
    if sp.issparse(X):
        X = X.tocsr()
        if X.shape[0] * X.shape[1] and X.nnz / (X.shape[0] * X.shape[1]) > 0.25:
            return X.toarray()
        return X
    return np.asarray(X, dtype=np.float64)


def _hstack(X, Z):
    if sp.issparse(X):
        return sp.hstack([X, sp.csr_matrix(Z)], format="csr")
    return np.hstack([np.asarray(X, dtype=np.float64), np.asarray(Z, dtype=np.float64)])


def _check_dim(X, expected):
    if X.shape[1] != expected:
        raise ValueError(f"model expects {expected} input columns, got {X.shape[1]}")


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def class_weights(y, mode, n_classes=None):
    """Per-example weights; ``"balanced"`` gives every class the same total weight."""
    y = np.asarray(y, dtype=np.intp)
    if mode in (None, "none"):
        return np.ones(y.size)
    if mode != "balanced":
        raise ValueError(f"unknown class_weight {mode!r}")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(y, minlength=k).astype(np.float64)
    present = np.count_nonzero(counts)
    w = np.zeros(k)
    w[counts > 0] = y.size / (present * counts[counts > 0])
    return w[y]


def binary_objective(params, X, y, sample_weight, c):
    """L2-regularised mean logistic loss and its gradient.

    ``params`` is ``[w_1..w_d, b]``; the bias is not penalised. The value is
    ``sum_i s_i log(1 + exp(-t_i z_i)) / N + ||w||^2 / (2 c N)``, which has the
    same minimiser as the usual ``||w||^2/2 + c * sum`` form.
    """
    n = X.shape[0]
    w, b = params[:-1], params[-1]
    z = X @ w + b
    loss = np.logaddexp(0.0, z) - y * z
    f = sample_weight @ loss / n + w @ w / (2.0 * c * n)
    r = sample_weight * (expit(z) - y) / n
    g = np.empty_like(params)
    g[:-1] = X.T @ r + w / (c * n)
    g[-1] = r.sum()
    return f, g


def softmax_objective(params, X, y, sample_weight, c, n_classes):
    """Multinomial counterpart of :func:`binary_objective`.

    ``params`` is the flattened ``(n_classes, d + 1)`` matrix whose last
    column holds the biases.
    """
    n, d = X.shape
    P = params.reshape(n_classes, d + 1)
    W, b = P[:, :-1], P[:, -1]
    Z = np.asarray(X @ W.T) + b
    logp = log_softmax(Z, axis=1)
    rows = np.arange(n)
    f = -(sample_weight @ logp[rows, y]) / n + (W * W).sum() / (2.0 * c * n)
    R = np.exp(logp)
    R[rows, y] -= 1.0
    R *= (sample_weight / n)[:, None]
    G = np.empty_like(P)
    G[:, :-1] = np.asarray(X.T @ R).T + W / (c * n)
    G[:, -1] = R.sum(axis=0)
    return f, G.ravel()


def _minimize(fun, x0, solver, tol, max_iter):
    """Return (x, loss_history, n_iter)."""
    if solver == "lbfgs":
        history = []

        def cb(xk):
            history.append(fun(xk)[0])

        res = minimize(fun, x0, jac=True, method="L-BFGS-B", callback=cb,
                       options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15,
                                "maxcor": 20})
        return res.x, history, int(res.nit)
    if solver == "gd":
        return _gradient_descent(fun, x0, tol, max_iter)
    raise ValueError(f"unknown solver {solver!r}")


def _gradient_descent(fun, x, tol, max_iter, armijo=1e-4):
    """Full-batch gradient descent with backtracking (Armijo) line search."""
    f, g = fun(x)
    history = [f]
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        if np.abs(g).max() < tol:
            it -= 1
            break
        gg = g @ g
        step *= 2.0
        while True:
            x_new = x - step * g
            f_new, g_new = fun(x_new)
            if f_new <= f - armijo * step * gg or step < 1e-20:
                break
            step *= 0.5
        x, f, g = x_new, f_new, g_new
        history.append(f)
    return x, history, it


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

class BinaryLR:
    """L2-regularised binary logistic regression.

    Parameters
    ----------
    c : float
        Inverse regularisation strength.
    class_weight : {None, "none", "balanced"}
    solver : {"lbfgs", "gd"}
        ``"gd"`` is plain gradient descent with Armijo backtracking; it is
        exact but slow on ill-conditioned problems.
    tol : float
        Stop when the gradient infinity-norm falls below this.
    """

    def __init__(self, c=1.0, class_weight=None, solver="lbfgs", tol=1e-6, max_iter=10000):
        self.c = float(c)
        self.class_weight = None if class_weight == "none" else class_weight
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.coef_ = None
        self.intercept_ = None

    @property
    def n_features_in_(self):
        return None if self.coef_ is None else self.coef_.size

    def fit(self, X, y, sample_weight=None):
        X = _dense_if_full(X)
        y = np.asarray(y).astype(np.float64).ravel()
        if y.size != X.shape[0]:
            raise ValueError("X and y have different numbers of rows")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("binary targets must be 0/1")
        if y.min() == y.max():
            raise SingleClassError("training labels contain a single class")
        sw = class_weights(y.astype(np.intp), self.class_weight, 2)
        if sample_weight is not None:
            sw = sw * np.asarray(sample_weight, dtype=np.float64)
        x0 = np.zeros(X.shape[1] + 1)
        x, self.loss_history_, self.n_iter_ = _minimize(
            lambda p: binary_objective(p, X, y, sw, self.c), x0,
            self.solver, self.tol, self.max_iter)
        self.coef_, self.intercept_ = x[:-1].copy(), float(x[-1])
        return self

    def decision_function(self, X):
        X = _dense_if_full(X)
        _check_dim(X, self.coef_.size)
        return np.asarray(X @ self.coef_).ravel() + self.intercept_

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(np.uint8)

    def to_dict(self):
        return {"type": "binary_lr", "c": self.c, "class_weight": self.class_weight,
                "solver": self.solver, "coef": self.coef_.tolist(),
                "intercept": self.intercept_}

    @classmethod
    def from_dict(cls, d):
        m = cls(c=d["c"], class_weight=d["class_weight"], solver=d.get("solver", "lbfgs"))
        m.coef_ = np.asarray(d["coef"], dtype=np.float64)
        m.intercept_ = float(d["intercept"])
        return m


class SoftmaxLR:
    """Multinomial logistic regression over classes ``0..n_classes-1``."""

    def __init__(self, c=1.0, class_weight=None, solver="lbfgs", tol=1e-6, max_iter=10000):
        self.c = float(c)
        self.class_weight = None if class_weight == "none" else class_weight
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.coef_ = None
        self.intercept_ = None

    @property
    def n_classes_(self):
        return None if self.coef_ is None else self.coef_.shape[0]

    def fit(self, X, y, n_classes=None):
        X = _dense_if_full(X)
        y = np.asarray(y, dtype=np.intp).ravel()
        if y.size != X.shape[0]:
            raise ValueError("X and y have different numbers of rows")
        k = int(y.max()) + 1 if n_classes is None else int(n_classes)
        if np.unique(y).size < 2:
            raise SingleClassError("training labels contain a single class")
        sw = class_weights(y, self.class_weight, k)
        d = X.shape[1]
        x0 = np.zeros(k * (d + 1))
        x, self.loss_history_, self.n_iter_ = _minimize(
            lambda p: softmax_objective(p, X, y, sw, self.c, k), x0,
            self.solver, self.tol, self.max_iter)
        P = x.reshape(k, d + 1)
        self.coef_, self.intercept_ = P[:, :-1].copy(), P[:, -1].copy()
        return self

    def decision_function(self, X):
        X = _dense_if_full(X)
        _check_dim(X, self.coef_.shape[1])
        return np.asarray(X @ self.coef_.T) + self.intercept_

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def to_dict(self):
        return {"type": "softmax_lr", "c": self.c, "class_weight": self.class_weight,
                "solver": self.solver, "coef": self.coef_.tolist(),
                "intercept": self.intercept_.tolist()}

    @classmethod
    def from_dict(cls, d):
        m = cls(c=d["c"], class_weight=d["class_weight"], solver=d.get("solver", "lbfgs"))
        m.coef_ = np.asarray(d["coef"], dtype=np.float64)
        m.intercept_ = np.asarray(d["intercept"], dtype=np.float64)
        return m


class ConstantClassifier:
    """Emits the same posterior for every row.

    With a scalar ``rate`` it behaves as a binary model; with a vector it is
    a single-label model over ``len(rate)`` classes.
    """

    def __init__(self, rate, n_features=None):
        self.rate = np.asarray(rate, dtype=np.float64)
        self.n_features = n_features

    def predict_proba(self, X):
        n = X.shape[0]
        if self.rate.ndim == 0:
            return np.full(n, float(self.rate))
        return np.tile(self.rate, (n, 1))

    def predict(self, X):
        P = self.predict_proba(X)
        return (P > 0.5).astype(np.uint8) if P.ndim == 1 else P.argmax(axis=1)

    def to_dict(self):
        return {"type": "constant", "rate": self.rate.tolist(), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, d):
        return cls(d["rate"], d.get("n_features"))


def train_binary_lr(X, y, c=1.0, class_weight=None, seed=0, **kw):
    """Fit a :class:`BinaryLR`. ``seed`` is accepted for interface symmetry;
    the optimiser is deterministic."""
    return BinaryLR(c=c, class_weight=class_weight, **kw).fit(X, y)


def fit_binary(X, y, c=1.0, class_weight=None, **kw):
    """Fit a :class:`BinaryLR`, or a clamped constant when ``y`` has one class."""
    y = np.asarray(y).ravel()
    if y.size and y.min() == y.max():
        rate = float(np.clip(y.mean(), FALLBACK_CLAMP, 1 - FALLBACK_CLAMP))
        return ConstantClassifier(rate, X.shape[1])
    return BinaryLR(c=c, class_weight=class_weight, **kw).fit(X, y)


def predict_posterior(model, X):
    return model.predict_proba(X)


def _per_class(value, n):
    if isinstance(value, (list, tuple, np.ndarray)):
        if len(value) != n:
            raise ValueError(f"expected {n} per-class values, got {len(value)}")
        return list(value)
    return [value] * n


class BinaryRelevance:
    """One independent binary classifier per class.

    ``c`` and ``class_weight`` may be scalars or per-class lists. A custom
    ``trainer(X, y)`` returning any binary model replaces logistic regression.
    """

    def __init__(self, c=1.0, class_weight=None, trainer=None):
        self.c = c
        self.class_weight = class_weight
        self.trainer = trainer
        self.models_ = None

    def fit(self, X, Y):
        X = _dense_if_full(X)
        Y = np.asarray(Y)
        n = Y.shape[1]
        cs, cws = _per_class(self.c, n), _per_class(self.class_weight, n)
        if self.trainer is not None:
            self.models_ = [self.trainer(X, Y[:, i]) for i in range(n)]
        else:
            self.models_ = [fit_binary(X, Y[:, i], cs[i], cws[i]) for i in range(n)]
        return self

    def predict_proba(self, X):
        X = _dense_if_full(X)
        return np.column_stack([m.predict_proba(X) for m in self.models_])

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(np.uint8)

    def to_dict(self):
        return {"type": "binary_relevance", "c": _jsonable(self.c),
                "class_weight": _jsonable(self.class_weight),
                "models": [model_to_dict(m) for m in self.models_]}

    @classmethod
    def from_dict(cls, d):
        m = cls(c=d["c"], class_weight=d["class_weight"])
        m.models_ = [model_from_dict(x) for x in d["models"]]
        return m


def cv_posteriors(X, labels, trainer, folds=5, seed=0):
    """Out-of-fold posteriors for every row.

    Folds come from :func:`iterative_stratified_split` on ``labels``; each row
    is scored by a model ``trainer(X_train, labels_train)`` that never saw it.
    ``trainer`` must return an object whose ``predict_proba`` yields one
    column per label column.
    """
    Y = np.asarray(labels)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    n_rows = Y.shape[0]
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > n_rows:
        raise ValueError(f"cannot make {folds} folds from {n_rows} rows")
    X = _dense_if_full(X)
    parts = iterative_stratified_split(Y, [1.0 / folds] * folds, seed=seed)
    out = np.zeros(Y.shape, dtype=np.float64)
    everything = np.arange(n_rows)
    for test_idx in parts:
        if test_idx.size == 0:
            continue
        train_idx = np.setdiff1d(everything, test_idx, assume_unique=True)
        model = trainer(X[train_idx], Y[train_idx])
        P = np.asarray(model.predict_proba(X[test_idx]))
        out[test_idx] = P.reshape(test_idx.size, -1)
    return out[:, 0] if squeeze else out


class _Standardizer:
    def __init__(self, mean, scale):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, M):
        mean = M.mean(axis=0)
        scale = M.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    def transform(self, M):
        return (M - self.mean) / self.scale


class StackedClassifier:
    """Stacked generalisation for multi-label data.

    Base members are per-class logistic regressions with fixed defaults;
    their out-of-fold posteriors, appended to the original features, train
    one meta logistic regression per class. ``normalize`` z-scores the meta
    inputs with training statistics.
    """

    def __init__(self, c=1.0, class_weight=None, normalize=False, folds=5,
                 base_c=1.0, base_class_weight=None, seed=0):
        self.c = c
        self.class_weight = class_weight
        self.normalize = normalize
        self.folds = folds
        self.base_c = base_c
        self.base_class_weight = base_class_weight
        self.seed = seed

    def _base_trainer(self, X, Y):
        return BinaryRelevance(self.base_c, self.base_class_weight).fit(X, Y)

    def _meta_inputs(self, X, Z):
        M = _hstack(X, Z)
        if self.scaler_ is not None:
            M = self.scaler_.transform(M.toarray() if sp.issparse(M) else M)
        return M

    def fit(self, X, Y):
        X = _dense_if_full(X)
        Y = np.asarray(Y)
        self.n_features_ = X.shape[1]
        self.base_ = self._base_trainer(X, Y)
        Z = cv_posteriors(X, Y, self._base_trainer, folds=min(self.folds, Y.shape[0]),
                          seed=self.seed)
        self.scaler_ = None
        if self.normalize:
            M = _hstack(X, Z)
            self.scaler_ = _Standardizer.fit(M.toarray() if sp.issparse(M) else M)
        self.meta_ = BinaryRelevance(self.c, self.class_weight).fit(self._meta_inputs(X, Z), Y)
        return self

    @property
    def meta_input_dim(self):
        return self.n_features_ + len(self.base_.models_)

    def predict_proba(self, X):
        X = _dense_if_full(X)
        _check_dim(X, self.n_features_)
        Z = self.base_.predict_proba(X)
        return self.meta_.predict_proba(self._meta_inputs(X, Z))

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(np.uint8)

    def to_dict(self):
        return {"type": "stacked", "c": _jsonable(self.c),
                "class_weight": _jsonable(self.class_weight),
                "normalize": self.normalize, "folds": self.folds, "base_c": self.base_c,
                "base_class_weight": self.base_class_weight, "seed": self.seed,
                "n_features": self.n_features_, "base": self.base_.to_dict(),
                "meta": self.meta_.to_dict(),
                "scaler": None if self.scaler_ is None else
                {"mean": self.scaler_.mean.tolist(), "scale": self.scaler_.scale.tolist()}}

    @classmethod
    def from_dict(cls, d):
        m = cls(c=d["c"], class_weight=d["class_weight"], normalize=d["normalize"],
                folds=d["folds"], base_c=d["base_c"],
                base_class_weight=d["base_class_weight"], seed=d["seed"])
        m.n_features_ = d["n_features"]
        m.base_ = BinaryRelevance.from_dict(d["base"])
        m.meta_ = BinaryRelevance.from_dict(d["meta"])
        s = d["scaler"]
        m.scaler_ = None if s is None else _Standardizer(s["mean"], s["scale"])
        return m


class ChainClassifier:
    """Classifier chain: link ``i`` also sees hard predictions of links ``0..i-1``.

    Training augments the features with the *in-sample* hard predictions of
    the already trained links, so training and inference inputs match.
    """

    def __init__(self, order=None, c=1.0, class_weight=None):
        self.order = None if order is None else [int(i) for i in order]
        self.c = c
        self.class_weight = class_weight

    def fit(self, X, Y):
        X = _dense_if_full(X)
        Y = np.asarray(Y)
        n = Y.shape[1]
        order = list(range(n)) if self.order is None else self.order
        if sorted(order) != list(range(n)):
            raise ValueError(f"order must be a permutation of 0..{n - 1}")
        self.order_ = order
        self.n_features_ = X.shape[1]
        cs, cws = _per_class(self.c, n), _per_class(self.class_weight, n)
        H = np.zeros((X.shape[0], 0))
        self.links_ = []
        for cls in order:
            Xa = _hstack(X, H)
            link = fit_binary(Xa, Y[:, cls], cs[cls], cws[cls])
            self.links_.append(link)
            H = np.column_stack([H, link.predict(Xa)])
        return self

    @property
    def input_dims(self):
        return [self.n_features_ + i for i in range(len(self.links_))]

    def predict_proba(self, X):
        X = _dense_if_full(X)
        _check_dim(X, self.n_features_)
        out = np.zeros((X.shape[0], len(self.links_)))
        H = np.zeros((X.shape[0], 0))
        for cls, link in zip(self.order_, self.links_):
            Xa = _hstack(X, H)
            p = link.predict_proba(Xa)
            out[:, cls] = p
            H = np.column_stack([H, (p > 0.5).astype(np.float64)])
        return out

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(np.uint8)

    def to_dict(self):
        return {"type": "chain", "order": self.order_, "c": _jsonable(self.c),
                "class_weight": _jsonable(self.class_weight),
                "n_features": self.n_features_,
                "links": [model_to_dict(m) for m in self.links_]}

    @classmethod
    def from_dict(cls, d):
        m = cls(order=d["order"], c=d["c"], class_weight=d["class_weight"])
        m.order_ = list(d["order"])
        m.n_features_ = d["n_features"]
        m.links_ = [model_from_dict(x) for x in d["links"]]
        return m


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return v


_REGISTRY = {
    "binary_lr": BinaryLR,
    "softmax_lr": SoftmaxLR,
    "constant": ConstantClassifier,
    "binary_relevance": BinaryRelevance,
    "stacked": StackedClassifier,
    "chain": ChainClassifier,
}


def model_to_dict(model):
    return model.to_dict()


def model_from_dict(d):
    try:
        cls = _REGISTRY[d["type"]]
    except KeyError:
        raise ValueError(f"unknown model type {d.get('type')!r}") from None
    return cls.from_dict(d)


def save_model(model, path):
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "model": model_to_dict(model)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    return model_from_dict(doc["model"])
