"""Quantification error measures."""

import numpy as np

__all__ = ["ae", "rae", "smooth", "ae_multilabel", "rae_multilabel", "aggregate_by_bin"]


def _pair(p, p_hat):
    p = np.asarray(p, dtype=np.float64).ravel()
    p_hat = np.asarray(p_hat, dtype=np.float64).ravel()
    if p.shape != p_hat.shape:
        raise ValueError(f"length mismatch: {p.size} vs {p_hat.size}")
    return p, p_hat


def ae_multilabel(p, p_hat):
    """Mean over classes of ``|p_i - p_hat_i|``."""
    p, p_hat = _pair(p, p_hat)
    return float(np.abs(p - p_hat).mean())


def smooth(p, sample_size):
    """Additive smoothing with ``eps = 1 / (2 * sample_size)``.

    Maps ``p`` to ``(eps + p) / (2 eps + 1)``; the complement ``1 - p`` maps
    to one minus the result, so the binary distribution stays normalised.
    Works element-wise on arrays.
    """
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    eps = 1.0 / (2.0 * sample_size)
    return (eps + np.asarray(p, dtype=np.float64)) / (2.0 * eps + 1.0)


def rae_multilabel(p, p_hat, sample_size=None):
    """Relative absolute error averaged over classes and their complements.

    Both vectors are smoothed first when ``sample_size`` is given; without
    it a true prevalence of exactly 0 or 1 makes the value infinite.
    """
    p, p_hat = _pair(p, p_hat)
    if sample_size is not None:
        p, p_hat = smooth(p, sample_size), smooth(p_hat, sample_size)
    diff = np.abs(p - p_hat)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = diff / p + diff / (1.0 - p)
    terms = np.where(diff == 0, 0.0, terms)
    return float(terms.sum() / (2 * p.size))


ae = ae_multilabel
rae = rae_multilabel


def aggregate_by_bin(values, bins):
    """Mean and count of ``values`` per bin label.

    Returns ``{bin: (mean, count)}`` containing only bins that received at
    least one value, in order of first appearance.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    bins = list(bins)
    if len(bins) != values.size:
        raise ValueError("every value needs a bin")
    out = {}
    for b in dict.fromkeys(bins):
        sel = np.array([x == b for x in bins])
        out[b] = (float(values[sel].mean()), int(sel.sum()))
    return out
