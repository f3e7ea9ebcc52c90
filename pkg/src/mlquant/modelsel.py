"""Quantification-oriented model selection.

Configurations are scored by mean AE over ML-APP samples drawn from a
held-out split, never by a classification measure; the winner is refit on
the whole training set.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import itertools
import json
import logging
import math

import numpy as np

from ._rng import derive_seed
from .dataset import iterative_stratified_split
from .protocol import MLAPPParams, mlapp_generate
from .quantify_ml import ConfigurationError, build_quantifier, normalize_spec

__all__ = ["SelectionReport", "default_param_grid", "expand_grid", "grid_search"]

log = logging.getLogger(__name__)

LR_C = [0.1, 1, 10, 100, 1000]
LR_CLASS_WEIGHT = [None, "balanced"]
RIDGE_ALPHA = [1e-3, 1e-2, 1e-1, 1, 10, 100, 1000]
KNN_K = [1, 5, 10, 20]
RAKEL_K = [2, 5, 10, 50, 100]
KMEANS_K = [5, 15, 50, 100]


def default_param_grid(spec, n_classes=None):
    """The standard search space for a pipeline spec.

    Logistic regression searches ``c`` and ``class_weight``; stacking adds
    ``normalize``; RQ adds the regressor's strength; LPQ adds the number
    of clusters (capped at ``n_classes`` when given).
    """
    s = normalize_spec(spec)
    grid = {"c": list(LR_C), "class_weight": list(LR_CLASS_WEIGHT)}
    if s["classifier"] == "stacked":
        grid["normalize"] = [True, False]
    if s["aggregator"] == "rq":
        if s["regressor"].get("kind", "ridge") == "ridge":
            grid["regressor.alpha"] = list(RIDGE_ALPHA)
        else:
            grid["regressor.k"] = list(KNN_K)
    elif s["aggregator"] == "lpq":
        ks = RAKEL_K if s["clustering"].get("method") == "random" else KMEANS_K
        if n_classes is not None:
            ks = sorted({min(k, n_classes) for k in ks})
        grid["clustering.k_clusters"] = ks
    return grid


def expand_grid(grid):
    """Cartesian product of a ``{name: [values]}`` grid, first key slowest."""
    if not grid:
        raise ValueError("grid must not be empty")
    names = list(grid)
    values = [list(grid[k]) for k in names]
    if any(len(v) == 0 for v in values):
        raise ValueError("every grid entry needs at least one value")
    return [dict(zip(names, combo)) for combo in itertools.product(*values)]


@dataclass
class SelectionReport:
    configs: list
    scores: list
    n_samples: int
    chosen_index: int
    seed: int
    errors: list = field(default_factory=list)
    per_class_choice: list = None

    @property
    def chosen(self):
        return self.configs[self.chosen_index]

    @property
    def best_score(self):
        return self.scores[self.chosen_index]

    def rows(self):
        for i, (cfg, score, err) in enumerate(zip(self.configs, self.scores, self.errors)):
            yield {"config_id": i, "config": json.dumps(cfg, sort_keys=True),
                   "mean_ae": "inf" if math.isinf(score) else repr(score),
                   "n_samples": self.n_samples, "chosen": int(i == self.chosen_index),
                   "seed": self.seed, "error": err or ""}

    def to_csv(self, path_or_buffer=None, header_lines=()):
        """CSV with one row per configuration; returns the text."""
        out = io.StringIO()
        for line in header_lines:
            out.write(f"# {line}\n")
        cols = ["config_id", "config", "mean_ae", "n_samples", "chosen", "seed", "error"]
        w = csv.DictWriter(out, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        text = out.getvalue()
        if path_or_buffer is not None:
            if hasattr(path_or_buffer, "write"):
                path_or_buffer.write(text)
            else:
                with open(path_or_buffer, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
        return text


def _evaluate(spec, config, train, valid_X, samples):
    """Per-sample, per-class absolute errors of one configuration."""
    q = build_quantifier(dict(spec, **config)).fit(train)
    scores = q.predict_scores(valid_X)
    return np.array([np.abs(q.aggregate(scores[s.indices]) - s.true_prevalence)
                     for s in samples])


def grid_search(dataset, spec, grid=None, val_fraction=0.4, mlapp=None, seed=0,
                per_class=False, threads=1):
    """Pick the configuration with the lowest mean validation AE and refit it.

    Parameters
    ----------
    dataset : MultiLabelDataset
        Full training set ``L``.
    spec : dict
        Pipeline spec; grid entries override its keys (dotted keys reach
        nested fields such as ``"regressor.alpha"``).
    grid : dict, optional
        ``{name: [values]}``; defaults to :func:`default_param_grid`.
    val_fraction : float
        Share of ``L`` held out (iterative stratification) for validation.
    mlapp : MLAPPParams, optional
        Validation sample parameters; ``k`` is capped at the validation size.
    per_class : bool
        For ``bc_ba`` only: choose ``c`` and ``class_weight`` separately
        for each class, using that class's column of errors.

    Returns
    -------
    (quantifier, SelectionReport)
        The quantifier is refit on all of ``dataset``.
    """
    base_spec = normalize_spec(dict(spec, seed=spec.get("seed", seed)))
    grid = default_param_grid(base_spec, dataset.n_classes) if grid is None else grid
    configs = expand_grid(grid)
    if per_class:
        if base_spec["family"] != "bc_ba":
            raise ConfigurationError("per-class selection applies to bc_ba only")
        if set(grid) - {"c", "class_weight"}:
            raise ConfigurationError("per-class selection searches c and class_weight only")

    part_tr, part_va = iterative_stratified_split(
        dataset, [1 - val_fraction, val_fraction], seed=derive_seed(seed, "val_split"))
    train, valid = dataset.subset(part_tr), dataset.subset(part_va)
    mlapp = mlapp or MLAPPParams(k=100, m=1)
    params = MLAPPParams(min(mlapp.k, valid.n_rows), mlapp.m, mlapp.grid,
                         derive_seed(seed, "val_mlapp"))
    samples = mlapp_generate(valid, params)
    if not samples:
        raise ConfigurationError("no validation samples could be generated")

    def run(cfg):
        try:
            return _evaluate(base_spec, cfg, train, valid.features, samples), None
        except Exception as exc:  # scored as +inf, search continues
            log.warning("configuration %s failed: %s", cfg, exc)
            return None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(run, configs))
    else:
        outcomes = [run(cfg) for cfg in configs]

    scores = [math.inf if errs is None else float(errs.mean()) for errs, _ in outcomes]
    errors = [err for _, err in outcomes]
    chosen = int(np.argmin(scores))  # first minimum wins ties
    if math.isinf(scores[chosen]):
        raise ConfigurationError("every configuration failed to fit")
    report = SelectionReport(configs, scores, len(samples), chosen, seed, errors)

    final = normalize_spec(dict(base_spec, **configs[chosen]))
    if per_class:
        final = _per_class_choice(base_spec, configs, outcomes, dataset.n_classes, report)
    quantifier = build_quantifier(final).fit(dataset)
    quantifier.selected_spec_ = final
    return quantifier, report


def _per_class_choice(spec, configs, outcomes, n_classes, report):
    table = np.full((len(configs), n_classes), np.inf)
    for i, (errs, _) in enumerate(outcomes):
        if errs is not None:
            table[i] = errs.mean(axis=0)
    best = table.argmin(axis=0)
    report.per_class_choice = [int(b) for b in best]
    out = dict(spec)
    for key in ("c", "class_weight"):
        out[key] = [configs[b].get(key, spec[key]) for b in best]
    return normalize_spec(out)
