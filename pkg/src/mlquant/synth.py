"""Synthetic multi-label data with controlled label correlation.

Labels come from a latent-factor probit model: every class belongs to a
group sharing one standard-normal factor ``z``, and

    y_i = [ sqrt(rho) z + sqrt(1 - rho) e_i > Phi^{-1}(1 - p_i) ]

so the marginal of class ``i`` is exactly ``p_i`` and ``rho`` sets the
latent (tetrachoric) correlation inside a group. Classes in different
groups are independent. A class can also be declared a copy of another,
or the union (logical OR) of several others; its marginal then follows
from theirs and is computed exactly from the latent Gaussian.
Features are a sum of class-specific Gaussian bumps plus isotropic noise.
"""

import numpy as np
import scipy.sparse as sp
from scipy.stats import multivariate_normal, norm

from ._rng import stream
from .dataset import MultiLabelDataset

__all__ = ["SyntheticSpecError", "CorrelationSpec", "synth_generate"]


class SyntheticSpecError(ValueError):
    """The requested correlation and prevalences cannot be realised."""


class CorrelationSpec:
    """Groups of correlated classes, a latent correlation and copy relations.

    Parameters
    ----------
    rho : float
        Latent correlation inside each group, in ``[0, 1)``.
    groups : list of lists, optional
        Partition of the class ids; default puts every class in one group.
    copies : dict, optional
        ``{target: source}``: column ``target`` is set equal to ``source``.
    unions : dict, optional
        ``{target: [sources]}``: column ``target`` is the OR of the sources.
    """

    def __init__(self, rho=0.0, groups=None, copies=None, unions=None):
        self.rho = float(rho)
        self.groups = groups
        self.copies = {int(k): int(v) for k, v in (copies or {}).items()}
        self.unions = {int(k): [int(v) for v in vs] for k, vs in (unions or {}).items()}

    @classmethod
    def coerce(cls, value):
        if isinstance(value, CorrelationSpec):
            return value
        if value is None:
            return cls()
        if isinstance(value, (int, float)):
            return cls(rho=value)
        return cls(**value)

    def to_dict(self):
        return {"rho": self.rho, "groups": self.groups,
                "copies": {str(k): v for k, v in self.copies.items()},
                "unions": {str(k): v for k, v in self.unions.items()}}

    @property
    def derived(self):
        return set(self.copies) | set(self.unions)

    def resolve(self, n_classes):
        if not 0.0 <= self.rho < 1.0:
            raise SyntheticSpecError(f"rho must lie in [0, 1), got {self.rho}")
        groups = self.groups if self.groups is not None else [list(range(n_classes))]
        flat = sorted(int(i) for g in groups for i in g)
        if flat != list(range(n_classes)):
            raise SyntheticSpecError("groups must partition the class ids")
        for t, s in self.copies.items():
            if not (0 <= t < n_classes and 0 <= s < n_classes) or t == s:
                raise SyntheticSpecError(f"bad copy relation {t} <- {s}")
            if s in self.derived:
                raise SyntheticSpecError(f"copy source {s} is itself derived")
        for t, srcs in self.unions.items():
            if t in self.copies:
                raise SyntheticSpecError(f"class {t} is both a copy and a union")
            if not srcs or any(not 0 <= s < n_classes or s == t or s in self.derived
                               for s in srcs):
                raise SyntheticSpecError(f"bad union relation {t} <- {srcs}")
        return [[int(i) for i in g] for g in groups]


def synth_generate(n_classes=6, n_rows=1000, d=20, correlation=0.0, prevalences=None,
                   seed=0, separation=1.0, noise=1.0, class_names=None):
    """Draw a :class:`MultiLabelDataset` from the latent-factor model.

    Parameters
    ----------
    correlation : float, dict or CorrelationSpec
        A bare number is ``rho`` for a single group of all classes.
    prevalences : float or sequence, optional
        Planted marginals, each in ``(0, 1)``; default 0.3 for every class.
        Copies and unions have their marginal implied by their sources; a
        scalar is overridden for them, while a per-class sequence must agree
        with the implied value.
    separation : float or sequence
        Norm of each class's feature bump (scalar or per class); larger is
        easier to classify.

    Returns
    -------
    MultiLabelDataset
        ``metadata["planted_prevalence"]`` holds the exact marginals.
    """
    if n_classes < 1 or n_rows < 1 or d < 1:
        raise SyntheticSpecError("n_classes, n_rows and d must be positive")
    corr = CorrelationSpec.coerce(correlation)
    groups = corr.resolve(n_classes)
    p = np.full(n_classes, 0.3) if prevalences is None else np.broadcast_to(
        np.asarray(prevalences, dtype=np.float64), (n_classes,)).copy()
    if np.any((p <= 0) | (p >= 1)):
        raise SyntheticSpecError("planted prevalences must lie strictly inside (0, 1)")
    thresholds = norm.ppf(1 - p)
    group_of = {i: gi for gi, g in enumerate(groups) for i in g}
    implied = {t: p[s] for t, s in corr.copies.items()}
    for t, srcs in corr.unions.items():
        implied[t] = 1.0 - _all_below(thresholds[srcs], [group_of[s] for s in srcs], corr.rho)
    explicit = prevalences is not None and np.ndim(prevalences) > 0
    for t, value in implied.items():
        if explicit and abs(p[t] - value) > 1e-6:
            raise SyntheticSpecError(
                f"class {t} is derived with prevalence {value:.6f}, not {p[t]:.6f}")
        p[t] = value

    rng_lab = stream(seed, "synth", "labels")
    z = rng_lab.standard_normal((n_rows, len(groups)))
    e = rng_lab.standard_normal((n_rows, n_classes))
    latent = np.empty((n_rows, n_classes))
    for gi, group in enumerate(groups):
        latent[:, group] = np.sqrt(corr.rho) * z[:, [gi]] + np.sqrt(1 - corr.rho) * e[:, group]
    Y = (latent > thresholds).astype(np.uint8)
    for t, s in corr.copies.items():
        Y[:, t] = Y[:, s]
    for t, srcs in corr.unions.items():
        Y[:, t] = Y[:, srcs].max(axis=1)

    rng_feat = stream(seed, "synth", "features")
    bumps = rng_feat.standard_normal((n_classes, d))
    sep = np.broadcast_to(np.asarray(separation, dtype=np.float64), (n_classes,))
    bumps *= sep[:, None] / np.linalg.norm(bumps, axis=1, keepdims=True)
    X = Y @ bumps + noise * rng_feat.standard_normal((n_rows, d))

    names = tuple(class_names) if class_names else tuple(f"y{i}" for i in range(n_classes))
    meta = {"generator": "latent_probit", "planted_prevalence": p.tolist(),
            "correlation": corr.to_dict(), "seed": seed, "separation": sep.tolist(),
            "noise": noise}
    return MultiLabelDataset(sp.csr_matrix(X), Y, names, meta)


def _all_below(thresholds, groups, rho):
    """P(every latent is below its threshold) for latents with the group structure."""
    k = len(thresholds)
    if k == 1 or rho == 0 or len(set(groups)) == k:
        return float(np.prod(norm.cdf(thresholds)))
    cov = np.array([[1.0 if i == j else (rho if groups[i] == groups[j] else 0.0)
                     for j in range(k)] for i in range(k)])
    return float(multivariate_normal.cdf(thresholds, np.zeros(k), cov, abseps=1e-9,
                                         releps=1e-9))
