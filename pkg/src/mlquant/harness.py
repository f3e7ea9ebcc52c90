"""Experiment runner: load, clean, sample, fit, quantify, score, report.

An experiment is described by one JSON document (see ``CONFIG_SCHEMA``).
All randomness derives from the config's root seed through named
sub-streams, so a rerun reproduces every CSV byte for byte. Wall-clock
times are the only non-deterministic output and go to ``timings.json``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import time

import jsonschema
import numpy as np

from . import __version__
from ._rng import derive_seed
from .dataset import MultiLabelDataset, load_dataset, remove_rare_classes
from .metrics import ae_multilabel, rae_multilabel
from .modelsel import grid_search
from .protocol import BIN_NAMES, MLAPPParams, bin_shifts, default_grid, mlapp_generate
from .protocol import write_samples_csv
from .quantify_ml import build_quantifier, normalize_spec
from .synth import synth_generate

__all__ = ["CONFIG_SCHEMA", "ResultRecord", "load_config", "validate_config", "config_hash",
           "resolve_threads", "prepare_dataset", "run_experiment", "results_markdown"]

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("dataset", "method", "family", "base_method", "aggregator", "bin",
                  "mean_ae", "mean_rae", "n_samples", "error")

_MLAPP_SCHEMA = {
    "type": "object",
    "properties": {"k": {"type": "integer", "minimum": 1},
                   "m": {"type": "integer", "minimum": 1},
                   "grid_step": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                   "grid": {"type": "array", "items": {"type": "number"}}},
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["datasets", "methods"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "min_train_positives": {"type": "integer", "minimum": 0},
        "datasets": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["name"],
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "train": {"type": "string"},
                    "test": {"type": "string"},
                    "format": {"enum": ["svmlight_multilabel"]},
                    "synthetic": {
                        "type": "object",
                        "required": ["n_train", "n_test"],
                        "properties": {
                            "n_classes": {"type": "integer", "minimum": 1},
                            "n_train": {"type": "integer", "minimum": 1},
                            "n_test": {"type": "integer", "minimum": 1},
                            "d": {"type": "integer", "minimum": 1},
                            "correlation": {"type": ["number", "object"]},
                            "prevalences": {"type": ["number", "array"]},
                            "separation": {"type": ["number", "array"]},
                            "noise": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "additionalProperties": False,
                    },
                },
                "oneOf": [{"required": ["train", "test"]}, {"required": ["synthetic"]}],
                "additionalProperties": False,
            },
        },
        "methods": {"type": "array", "minItems": 1, "items": {"type": "object"}},
        "test_protocol": _MLAPP_SCHEMA,
        "model_selection": {
            "type": "object",
            "properties": {"grid": {"type": "object"},
                           "val_fraction": {"type": "number", "exclusiveMinimum": 0,
                                            "exclusiveMaximum": 1},
                           "mlapp": _MLAPP_SCHEMA,
                           "per_class": {"type": "boolean"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass
class ResultRecord:
    dataset: str
    method: str
    family: str
    base_method: str
    aggregator: str
    bin: str
    mean_ae: float
    mean_rae: float
    n_samples: int
    wall_time: float = 0.0
    error: str = ""

    def csv_row(self):
        num = lambda x: "" if math.isnan(x) else repr(float(x))
        return [self.dataset, self.method, self.family, self.base_method, self.aggregator,
                self.bin, num(self.mean_ae), num(self.mean_rae), self.n_samples, self.error]


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def validate_config(config, base_dir="."):
    """Schema-check ``config``, normalise every method spec and resolve paths.

    Returns a deep copy with dataset paths made absolute. Raises
    ``jsonschema.ValidationError``, ``FileNotFoundError`` or
    ``ConfigurationError`` (a ``ValueError``).
    """
    jsonschema.validate(config, CONFIG_SCHEMA)
    cfg = copy.deepcopy(config)
    names = [d["name"] for d in cfg["datasets"]]
    if len(set(names)) != len(names):
        raise ValueError("dataset names must be unique")
    for d in cfg["datasets"]:
        for key in ("train", "test"):
            if key in d:
                path = d[key] if os.path.isabs(d[key]) else os.path.join(base_dir, d[key])
                if not os.path.exists(path):
                    raise FileNotFoundError(f"dataset file not found: {path}")
                d[key] = os.path.abspath(path)
    method_names = [normalize_spec(m)["name"] for m in cfg["methods"]]
    if len(set(method_names)) != len(method_names):
        raise ValueError("method names must be unique; set 'name' to disambiguate")
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    return validate_config(config, os.path.dirname(os.path.abspath(path)))


def config_hash(config):
    """SHA-256 of the canonical config, ignoring where and how fast it runs."""
    core = {k: v for k, v in config.items() if k not in ("out", "threads")}
    text = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def resolve_threads(threads=None):
    """Explicit value, else ``MLQUANT_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("MLQUANT_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def _mlapp(d, seed):
    d = d or {}
    grid = d.get("grid") or default_grid(d.get("grid_step", 0.05))
    return MLAPPParams(k=d.get("k", 100), m=d.get("m", 1), grid=tuple(grid), seed=seed)


# --------------------------------------------------------------------------
# data preparation
# --------------------------------------------------------------------------

def _pad(ds, n_features, n_classes):
    ds = ds.with_features(n_features)
    if ds.n_classes == n_classes:
        return ds
    Y = np.zeros((ds.n_rows, n_classes), dtype=np.uint8)
    Y[:, :ds.n_classes] = ds.labels
    names = list(ds.class_names) + [f"y{i}" for i in range(ds.n_classes, n_classes)]
    return MultiLabelDataset(ds.features, Y, names, dict(ds.metadata))


def prepare_dataset(entry, seed, min_train_positives=5):
    """Load (or generate) one train/test pair and drop rare training classes.

    The test set keeps exactly the training set's surviving classes.
    """
    if "synthetic" in entry:
        s = dict(entry["synthetic"])
        n_train, n_test = s.pop("n_train"), s.pop("n_test")
        full = synth_generate(n_rows=n_train + n_test,
                              seed=derive_seed(seed, "synth", entry["name"]), **s)
        train = full.subset(np.arange(n_train))
        test = full.subset(np.arange(n_train, n_train + n_test))
    else:
        fmt = entry.get("format", "svmlight_multilabel")
        train, test = load_dataset(entry["train"], fmt), load_dataset(entry["test"], fmt)
        d = max(train.n_features, test.n_features)
        n = max(train.n_classes, test.n_classes)
        train, test = _pad(train, d, n), _pad(test, d, n)
    train = remove_rare_classes(train, min_train_positives)
    test = test.select_classes(train.metadata["kept_class_ids"])
    return train, test


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def _evaluate_method(spec, train, test, samples, bins, ds_name, selection, seed, k):
    """Fit one pipeline and score it on the shared samples, by bin."""
    s = normalize_spec(spec)
    t0 = time.perf_counter()
    report = None
    try:
        if selection is not None:
            q, report = grid_search(
                train, s, grid=selection.get("grid"),
                val_fraction=selection.get("val_fraction", 0.4),
                mlapp=_mlapp(selection.get("mlapp"), 0), seed=derive_seed(seed, "select"),
                per_class=selection.get("per_class", False))
        else:
            q = build_quantifier(s).fit(train)
        scores = q.predict_scores(test.features)
        ests = [q.aggregate(scores[smp.indices]) for smp in samples]
    except Exception as exc:
        log.warning("method %s failed on %s: %s", s["name"], ds_name, exc)
        rec = ResultRecord(ds_name, s["name"], s["family"], s["base_method"], s["aggregator"],
                           "error", math.nan, math.nan, 0, time.perf_counter() - t0,
                           f"{type(exc).__name__}: {exc}")
        return [rec], [], report
    elapsed = time.perf_counter() - t0
    ae = np.array([ae_multilabel(smp.true_prevalence, e) for smp, e in zip(samples, ests)])
    rae = np.array([rae_multilabel(smp.true_prevalence, e, sample_size=k)
                    for smp, e in zip(samples, ests)])
    records = []
    for b in BIN_NAMES:
        sel = np.array([x == b for x in bins])
        if sel.any():
            records.append(ResultRecord(ds_name, s["name"], s["family"], s["base_method"],
                                        s["aggregator"], b, float(ae[sel].mean()),
                                        float(rae[sel].mean()), int(sel.sum()), elapsed))
    per_sample = [(i, bins[i], samples[i].shift, ae[i], rae[i], ests[i])
                  for i in range(len(samples))]
    return records, per_sample, report


def _header(config, seed):
    return [f"mlquant {__version__}", f"config_sha256 {config_hash(config)}", f"seed {seed}"]


def _write_csv(path, header, columns, rows):
    out = io.StringIO()
    for line in header:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(out.getvalue())


def run_experiment(config, out_dir=None, seed=None, threads=None, markdown=False,
                   base_dir="."):
    """Run every method on every dataset and write the result tables.

    Parameters
    ----------
    config : dict
        Experiment document (validated here).
    out_dir, seed, threads : optional
        Override the config's ``out``, ``seed`` and ``threads``.
    markdown : bool
        Also write ``results.md`` with one summary table per dataset.

    Returns
    -------
    list of ResultRecord
        One record per (dataset, method, non-empty bin), or a single
        ``bin="error"`` record for a method that failed.
    """
    config = copy.deepcopy(config)
    if seed is not None:
        config["seed"] = int(seed)
    cfg = validate_config(config, base_dir)
    seed = int(cfg.get("seed", 0))
    threads = resolve_threads(threads if threads is not None else cfg.get("threads"))
    out_dir = out_dir or cfg.get("out") or "results"
    os.makedirs(out_dir, exist_ok=True)
    header = _header(config, seed)
    selection = cfg.get("model_selection")

    records, sample_rows, timings = [], [], {}
    for entry in cfg["datasets"]:
        name = entry["name"]
        train, test = prepare_dataset(entry, seed, cfg.get("min_train_positives", 5))
        params = _mlapp(cfg.get("test_protocol"), derive_seed(seed, "test_mlapp", name))
        samples = mlapp_generate(test, params, reference_prevalence=train.prevalence())
        if not samples:
            raise ValueError(f"no test samples could be generated for dataset {name}")
        bins, _ = bin_shifts(samples)
        write_samples_csv(samples, os.path.join(out_dir, f"samples_{name}.csv"),
                          header_lines=header + [f"dataset {name}"])

        specs = []
        for m in cfg["methods"]:
            spec = dict(m)
            spec.setdefault("seed", derive_seed(seed, "fit", name))
            specs.append(spec)
        job = lambda spec: _evaluate_method(spec, train, test, samples, bins, name,
                                            selection, seed, params.k)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                outcomes = list(pool.map(job, specs))
        else:
            outcomes = [job(spec) for spec in specs]

        timings[name] = {}
        for spec, (recs, per_sample, report) in zip(specs, outcomes):
            mname = normalize_spec(spec)["name"]
            records.extend(recs)
            timings[name][mname] = round(recs[0].wall_time, 3)
            for i, b, shift, ae, rae, est in per_sample:
                sample_rows.append([name, mname, i, b, repr(float(shift)), repr(float(ae)),
                                    repr(float(rae)), " ".join(repr(float(x)) for x in est)])
            if report is not None:
                safe = mname.replace("+", "_")
                report.to_csv(os.path.join(out_dir, f"selection_{name}_{safe}.csv"),
                              header_lines=header)

    _write_csv(os.path.join(out_dir, "results.csv"), header, RESULT_COLUMNS,
               [r.csv_row() for r in records])
    _write_csv(os.path.join(out_dir, "sample_errors.csv"), header,
               ("dataset", "method", "sample_id", "bin", "shift", "ae", "rae", "estimate"),
               sample_rows)
    with open(os.path.join(out_dir, "timings.json"), "w", encoding="utf-8") as fh:
        json.dump({"threads": threads, "seconds": timings}, fh, indent=2)
    if markdown:
        with open(os.path.join(out_dir, "results.md"), "w", encoding="utf-8") as fh:
            fh.write(results_markdown(records, header))
    return records


def results_markdown(records, header=()):
    """Per-dataset tables: methods by rows, AE and RAE per shift bin; best in bold."""
    lines = [f"<!-- {h} -->" for h in header]
    for ds in dict.fromkeys(r.dataset for r in records):
        rows = [r for r in records if r.dataset == ds]
        methods = list(dict.fromkeys(r.method for r in rows))
        table = {(r.method, r.bin): r for r in rows}
        best = {}
        for b in BIN_NAMES:
            for metric in ("mean_ae", "mean_rae"):
                vals = [getattr(table[(m, b)], metric) for m in methods if (m, b) in table]
                if vals:
                    best[(b, metric)] = min(vals)
        lines += ["", f"### {ds}", "",
                  "| method | " + " | ".join(f"AE {b}" for b in BIN_NAMES) + " | "
                  + " | ".join(f"RAE {b}" for b in BIN_NAMES) + " |",
                  "|---" * (1 + 2 * len(BIN_NAMES)) + "|"]
        for m in methods:
            if (m, "error") in table:
                lines.append(f"| {m} | " + " | ".join(["error"] * 2 * len(BIN_NAMES)) + " |")
                continue
            cells = []
            for metric in ("mean_ae", "mean_rae"):
                for b in BIN_NAMES:
                    r = table.get((m, b))
                    if r is None:
                        cells.append("")
                        continue
                    v = getattr(r, metric)
                    txt = f"{v:.4f}"
                    cells.append(f"**{txt}**" if v == best[(b, metric)] else txt)
            lines.append(f"| {m} | " + " | ".join(cells) + " |")
        counts = {}
        for r in rows:
            if r.bin in BIN_NAMES:
                counts.setdefault(r.bin, r.n_samples)
        counts = {b: counts[b] for b in BIN_NAMES if b in counts}
        lines += ["", "samples per bin: " + ", ".join(f"{b} {c}" for b, c in counts.items())]
    return "\n".join(lines) + "\n"
