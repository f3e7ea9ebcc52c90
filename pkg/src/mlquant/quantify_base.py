"""Aggregative base quantifiers: CC, PCC, ACC, PACC and SLD.

The functions here work on a single-label codeframe of ``n`` classes; a
binary problem is the ``n = 2`` case with class 1 as the positive class.
:class:`Aggregator` bundles one method with the state it learns at fit time.
"""

from typing import NamedTuple
import warnings

import numpy as np

__all__ = [
    "METHODS",
    "DegenerateMatrixWarning",
    "NotConvergedWarning",
    "cc",
    "pcc",
    "binary_posteriors",
    "estimate_M",
    "acc_correct",
    "pacc_correct",
    "sld",
    "sld_step",
    "SLDResult",
    "smooth_train_prevalence",
    "Aggregator",
]

METHODS = ("cc", "pcc", "acc", "pacc", "sld")
SLD_EPS = 1e-4
SLD_MAX_ITER = 1000
TRAIN_PREV_CLAMP = 1e-6
BINARY_DEGENERATE = 1e-9
COND_LIMIT = 1e12


class DegenerateMatrixWarning(UserWarning):
    """The misclassification matrix cannot be inverted; the uncorrected estimate is returned."""


class NotConvergedWarning(UserWarning):
    pass


def cc(hard_labels, n_classes):
    """Classify and count: fraction of rows predicted as each class."""
    y = np.asarray(hard_labels, dtype=np.intp).ravel()
    if y.size == 0:
        raise ValueError("cannot quantify an empty sample")
    return np.bincount(y, minlength=n_classes)[:n_classes] / y.size


def binary_posteriors(p):
    """Stack a vector of positive posteriors into ``(1 - p, p)`` columns."""
    p = np.asarray(p, dtype=np.float64).ravel()
    return np.column_stack([1.0 - p, p])


def pcc(posteriors):
    """Probabilistic classify and count: mean posterior per class."""
    P = np.asarray(posteriors, dtype=np.float64)
    if P.ndim == 1:
        P = binary_posteriors(P)
    if P.shape[0] == 0:
        raise ValueError("cannot quantify an empty sample")
    return P.mean(axis=0)


def estimate_M(y_true, predictions, n_classes, mode="hard"):
    """Misclassification rates ``m[i, j] = Pr(predicted i | true j)``.

    ``predictions`` are class ids (hard mode) or a posterior matrix (either
    mode; hard mode takes the argmax). In soft mode each column is the mean
    posterior vector over the examples of that true class. A true class with
    no examples gets the identity column.
    """
    y = np.asarray(y_true, dtype=np.intp).ravel()
    pred = np.asarray(predictions)
    if pred.ndim == 2 and pred.shape[1] == 1:
        pred = pred[:, 0]
    if mode == "hard":
        if pred.ndim == 2:
            pred = pred.argmax(axis=1)
        elif pred.dtype.kind == "f" and n_classes == 2 and not np.all(np.mod(pred, 1) == 0):
            pred = (pred > 0.5).astype(np.intp)
        onehot = np.eye(n_classes)[pred.astype(np.intp)]
    elif mode == "soft":
        onehot = binary_posteriors(pred) if pred.ndim == 1 else pred.astype(np.float64)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if onehot.shape[0] != y.size:
        raise ValueError("predictions and labels differ in length")
    M = np.eye(n_classes)
    for j in range(n_classes):
        rows = y == j
        if rows.any():
            M[:, j] = onehot[rows].mean(axis=0)
    return M


def _adjust(p_est, M):
    p_est = np.asarray(p_est, dtype=np.float64).ravel()
    M = np.asarray(M, dtype=np.float64)
    n = p_est.size
    if M.shape != (n, n):
        raise ValueError(f"matrix shape {M.shape} does not match {n} classes")
    if n == 2:
        tpr, fpr = M[1, 1], M[1, 0]
        if abs(tpr - fpr) <= BINARY_DEGENERATE:
            warnings.warn("tpr == fpr; returning the uncorrected estimate",
                          DegenerateMatrixWarning, stacklevel=3)
            return p_est.copy()
        pos = float(np.clip((p_est[1] - fpr) / (tpr - fpr), 0.0, 1.0))
        return np.array([1.0 - pos, pos])
    if not np.isfinite(np.linalg.cond(M)) or np.linalg.cond(M) > COND_LIMIT:
        warnings.warn("singular misclassification matrix; returning the uncorrected "
                      "estimate", DegenerateMatrixWarning, stacklevel=3)
        return p_est.copy()
    p = np.linalg.lstsq(M, p_est, rcond=None)[0]
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0:
        warnings.warn("adjusted estimate collapsed to zero; returning the uncorrected "
                      "estimate", DegenerateMatrixWarning, stacklevel=3)
        return p_est.copy()
    return p / total


def acc_correct(p_cc, M):
    """Solve ``M p = p_cc`` for ``p`` on the simplex.

    Binary problems use the closed form ``(p_cc - fpr) / (tpr - fpr)``
    clipped to [0, 1]; larger ones use least squares, clip negatives and
    renormalise. A degenerate ``M`` issues :class:`DegenerateMatrixWarning`
    and returns ``p_cc`` unchanged.
    """
    return _adjust(p_cc, M)


def pacc_correct(p_pcc, M_soft):
    """ACC correction applied to PCC estimates with expected (soft) rates."""
    return _adjust(p_pcc, M_soft)


class SLDResult(NamedTuple):
    prevalence: np.ndarray
    posteriors: np.ndarray
    iterations: int
    converged: bool


def smooth_train_prevalence(prev):
    """Clamp to [1e-6, 1 - 1e-6] and renormalise, so every class has some prior mass."""
    p = np.clip(np.asarray(prev, dtype=np.float64), TRAIN_PREV_CLAMP, 1 - TRAIN_PREV_CLAMP)
    return p / p.sum()


def sld_step(posteriors, train_prev, prev):
    """One EM step: rescale posteriors to prior ``prev``, return (new prior, posteriors)."""
    P = np.asarray(posteriors, dtype=np.float64)
    R = P * (np.asarray(prev) / np.asarray(train_prev))
    s = R.sum(axis=1, keepdims=True)
    R = np.divide(R, s, out=np.full_like(R, 1.0 / R.shape[1]), where=s > 0)
    return R.mean(axis=0), R


def sld(posteriors, train_prev, eps=SLD_EPS, max_iter=SLD_MAX_ITER):
    """EM re-estimation of test priors (Saerens-Latinne-Decaestecker).

    Starting from the training priors, posteriors are rescaled by the ratio
    of current to training priors and the priors are re-estimated as the
    mean rescaled posterior, until the largest change is below ``eps``.
    """
    P = np.asarray(posteriors, dtype=np.float64)
    if P.ndim == 1:
        P = binary_posteriors(P)
    if P.shape[0] == 0:
        raise ValueError("cannot quantify an empty sample")
    tp = np.asarray(train_prev, dtype=np.float64)
    if np.any(tp <= 0):
        raise ValueError("training prevalence must be strictly positive")
    prev, R = tp.copy(), P
    for it in range(1, max_iter + 1):
        new, R = sld_step(P, tp, prev)
        delta = np.abs(new - prev).max()
        prev = new
        if delta < eps:
            return SLDResult(prev, R, it, True)
    warnings.warn(f"SLD did not converge in {max_iter} iterations", NotConvergedWarning,
                  stacklevel=2)
    return SLDResult(prev, R, max_iter, False)


class Aggregator:
    """One base quantification method over a fixed single-label codeframe.

    ``fit`` takes held-out (out-of-fold) posteriors with their true labels;
    only ACC and PACC use them, to estimate the misclassification matrix.
    SLD uses the training class frequencies ``y_true``.
    """

    def __init__(self, method="pcc", n_classes=2, sld_eps=SLD_EPS, sld_max_iter=SLD_MAX_ITER):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        self.method = method
        self.n_classes = n_classes
        self.sld_eps = sld_eps
        self.sld_max_iter = sld_max_iter
        self.M_ = None
        self.train_prev_ = None

    @property
    def needs_heldout(self):
        return self.method in ("acc", "pacc")

    def fit(self, y_true, heldout_posteriors=None):
        y = np.asarray(y_true, dtype=np.intp).ravel()
        if self.method in ("acc", "pacc"):
            if heldout_posteriors is None:
                raise ValueError(f"{self.method} needs held-out posteriors")
            mode = "hard" if self.method == "acc" else "soft"
            P = np.asarray(heldout_posteriors, dtype=np.float64)
            if P.ndim == 1:
                P = binary_posteriors(P)
            self.M_ = estimate_M(y, P, self.n_classes, mode)
        if self.method == "sld":
            counts = np.bincount(y, minlength=self.n_classes)[:self.n_classes]
            self.train_prev_ = smooth_train_prevalence(counts / max(y.size, 1))
        return self

    def aggregate(self, posteriors):
        """Prevalence estimate (on the simplex) from a sample's posteriors."""
        P = np.asarray(posteriors, dtype=np.float64)
        if P.ndim == 1:
            P = binary_posteriors(P)
        if P.shape[0] == 0:
            raise ValueError("cannot quantify an empty sample")
        m = self.method
        if m == "cc":
            return cc(P.argmax(axis=1), P.shape[1])
        if m == "pcc":
            return pcc(P)
        if m == "acc":
            return acc_correct(cc(P.argmax(axis=1), P.shape[1]), self.M_)
        if m == "pacc":
            return pacc_correct(pcc(P), self.M_)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConvergedWarning)
            return sld(P, self.train_prev_, self.sld_eps, self.sld_max_iter).prevalence

    def to_dict(self):
        return {"method": self.method, "n_classes": self.n_classes,
                "sld_eps": self.sld_eps, "sld_max_iter": self.sld_max_iter,
                "M": None if self.M_ is None else self.M_.tolist(),
                "train_prev": None if self.train_prev_ is None else self.train_prev_.tolist()}

    @classmethod
    def from_dict(cls, d):
        a = cls(d["method"], d["n_classes"], d["sld_eps"], d["sld_max_iter"])
        a.M_ = None if d["M"] is None else np.asarray(d["M"])
        a.train_prev_ = None if d["train_prev"] is None else np.asarray(d["train_prev"])
        return a
