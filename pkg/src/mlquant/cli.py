"""Command-line interface: ``mlquant <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error (bad or missing flags) and
2 on a data or configuration error (unreadable file, infeasible request).
"""

import argparse
import csv
import io
import json
import logging
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .dataset import (DatasetFormatError, iterative_stratified_split, load_dataset,
                      save_dataset, stats_csv)
from .harness import load_config, resolve_threads, run_experiment
from .metrics import ae_multilabel, rae_multilabel
from .modelsel import grid_search
from .protocol import (MLAPPParams, bin_shifts, default_grid, mlapp_generate,
                       read_samples_csv, write_samples_csv)
from .quantify_ml import (ConfigurationError, build_quantifier, load_pipeline,
                          normalize_spec, save_pipeline)
from .synth import SyntheticSpecError, synth_generate

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DATA_ERRORS = (DatasetFormatError, ConfigurationError, SyntheticSpecError, ValueError,
               OSError, KeyError, jsonschema.ValidationError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit status 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load_json_arg(value):
    """Inline JSON or a path to a JSON file."""
    if value is None:
        return {}
    if value.lstrip().startswith("{"):
        return json.loads(value)
    with open(value, encoding="utf-8") as fh:
        return json.load(fh)


def _mlapp_from(args, seed):
    grid = default_grid(args.grid_step)
    return MLAPPParams(k=args.k, m=args.m, grid=grid, seed=seed)


def _prevalence_csv(rows, class_names):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["sample_id", *class_names])
    for sid, vec in rows:
        w.writerow([sid, *(repr(float(v)) for v in vec)])
    return out.getvalue()


def _read_prevalence_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    if not header or header[0] != "sample_id":
        raise ValueError(f"{path}: first column must be sample_id")
    return header[1:], [(r[0], np.array([float(x) for x in r[1:]])) for r in reader]


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_stats(args):
    train = load_dataset(args.file)
    test = load_dataset(args.test) if args.test else None
    _emit(stats_csv(train, test, header=not args.no_header), args.out)


def cmd_split(args):
    ds = load_dataset(args.file)
    fractions = args.fractions
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    parts = iterative_stratified_split(ds, fractions, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.file))[0]
    for i, idx in enumerate(parts):
        path = os.path.join(args.out, f"{stem}.part{i}.txt")
        save_dataset(ds.subset(idx), path)
        print(f"{path}\t{idx.size} rows")


def cmd_sample(args):
    ds = load_dataset(args.file)
    ref = load_dataset(args.reference).prevalence() if args.reference else None
    if ref is not None and ref.size != ds.n_classes:
        raise ValueError("reference file has a different number of classes")
    samples = mlapp_generate(ds, _mlapp_from(args, args.seed), reference_prevalence=ref)
    if not samples:
        raise ValueError("no (class, prevalence) pair has large enough pools")
    buf = io.StringIO()
    write_samples_csv(samples, buf, header_lines=[f"mlquant {__version__}",
                                                 f"seed {args.seed}", f"k {args.k}",
                                                 f"m {args.m}"])
    _emit(buf.getvalue(), args.out)


def cmd_train(args):
    ds = load_dataset(args.train)
    spec = _load_json_arg(args.spec)
    spec["seed"] = args.seed
    spec = normalize_spec(spec)
    q = build_quantifier(spec).fit(ds)
    save_pipeline(q, spec, args.out, class_names=ds.class_names,
                  extra={"n_features": ds.n_features})
    print(f"saved {spec['name']} to {args.out}")


def cmd_gridsearch(args):
    ds = load_dataset(args.train)
    spec = _load_json_arg(args.spec)
    grid = _load_json_arg(args.grid) or None
    q, report = grid_search(ds, spec, grid=grid, val_fraction=args.val_fraction,
                            mlapp=_mlapp_from(args, 0), seed=args.seed,
                            per_class=args.per_class, threads=resolve_threads(args.threads))
    header = [f"mlquant {__version__}", f"seed {args.seed}"]
    _emit(report.to_csv(header_lines=header), args.report)
    if args.out:
        save_pipeline(q, q.selected_spec_, args.out, class_names=ds.class_names,
                      extra={"n_features": ds.n_features})


def cmd_quantify(args):
    q, doc = load_pipeline(args.model)
    ds = load_dataset(args.file)
    n_feat = doc.get("n_features", ds.n_features)
    if ds.n_features > n_feat:
        raise ValueError(f"data has {ds.n_features} features, model expects {n_feat}")
    X = ds.with_features(n_feat).features
    names = doc.get("class_names") or [f"y{i}" for i in range(q.n_classes_)]
    scores = q.predict_scores(X)
    if args.samples:
        rows = [(i, q.aggregate(scores[s.indices]))
                for i, s in enumerate(read_samples_csv(args.samples))]
    else:
        rows = [("all", q.aggregate(scores))]
    _emit(_prevalence_csv(rows, names), args.out)


def cmd_evaluate(args):
    names, est = _read_prevalence_csv(args.estimates)
    ds = load_dataset(args.file)
    if len(names) != ds.n_classes:
        raise ValueError(f"estimates have {len(names)} classes, data has {ds.n_classes}")
    samples = read_samples_csv(args.samples, ds) if args.samples else None
    truths, sizes = [], []
    for sid, _ in est:
        if sid == "all":
            truths.append(ds.prevalence())
            sizes.append(ds.n_rows)
        else:
            if samples is None:
                raise ValueError("per-sample estimates need --samples")
            s = samples[int(sid)]
            truths.append(s.true_prevalence)
            sizes.append(s.size)
    ae = [ae_multilabel(t, e) for t, (_, e) in zip(truths, est)]
    rae = [rae_multilabel(t, e, sample_size=n) for t, (_, e), n in zip(truths, est, sizes)]
    if args.reference:
        ref = load_dataset(args.reference).prevalence()
        bins, _ = bin_shifts([ae_multilabel(ref, t) for t in truths])
    else:
        bins = ["all"] * len(est)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["bin", "mean_ae", "mean_rae", "n_samples"])
    for b in dict.fromkeys(bins):
        sel = [i for i, x in enumerate(bins) if x == b]
        w.writerow([b, repr(float(np.mean([ae[i] for i in sel]))),
                    repr(float(np.mean([rae[i] for i in sel]))), len(sel)])
    _emit(out.getvalue(), args.out)


def cmd_experiment(args):
    cfg = load_config(args.config)
    records = run_experiment(cfg, out_dir=args.out, seed=args.seed, threads=args.threads,
                             markdown=args.markdown)
    out = args.out or cfg.get("out") or "results"
    failed = sum(r.bin == "error" for r in records)
    print(f"wrote {len(records)} result rows to {out}"
          + (f" ({failed} failed methods)" if failed else ""))


def cmd_synth(args):
    spec = _load_json_arg(args.config)
    params = {"n_classes": args.n_classes, "n_rows": args.rows, "d": args.d,
              "correlation": args.rho, "seed": args.seed}
    params.update(spec)
    if args.seed_given:
        params["seed"] = args.seed
    ds = synth_generate(**params)
    save_dataset(ds, args.out if args.out not in (None, "-") else sys.stdout)
    planted = ds.metadata["planted_prevalence"]
    print("planted prevalence: " + " ".join(f"{p:.6f}" for p in planted), file=sys.stderr)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="mlquant", description="Multi-label quantification toolkit.")
    p.add_argument("--version", action="version", version=f"mlquant {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="SUBCOMMAND")
    sub.required = True

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help, description=help)
        sp.set_defaults(func=fn)
        return sp

    def seed(sp):
        sp.add_argument("--seed", type=int, default=0, help="root random seed (default 0)")

    def mlapp(sp, k=100):
        sp.add_argument("--k", type=int, default=k, help="sample size")
        sp.add_argument("--m", type=int, default=1, help="samples per (class, prevalence)")
        sp.add_argument("--grid-step", type=float, default=0.05,
                        help="prevalence grid spacing (default 0.05)")

    sp = add("stats", cmd_stats, "print dataset statistics as one CSV row")
    sp.add_argument("file")
    sp.add_argument("--test", help="test file, for the row count column")
    sp.add_argument("--no-header", action="store_true")
    sp.add_argument("--out", help="output file (default stdout)")

    sp = add("split", cmd_split, "iterative stratified split into parts")
    sp.add_argument("file")
    sp.add_argument("--fractions", type=float, nargs="+", default=[0.6, 0.4])
    sp.add_argument("--out", required=True, help="output directory")
    seed(sp)

    sp = add("sample", cmd_sample, "generate ML-APP samples as CSV")
    sp.add_argument("file")
    sp.add_argument("--reference", help="training file; fills in each sample's shift")
    sp.add_argument("--out", help="output CSV (default stdout)")
    mlapp(sp)
    seed(sp)

    sp = add("train", cmd_train, "fit a pipeline and save it as JSON")
    sp.add_argument("train")
    sp.add_argument("--spec", help="pipeline spec, inline JSON or file (default bc_ba+pcc)")
    sp.add_argument("--out", required=True, help="pipeline JSON to write")
    seed(sp)

    sp = add("gridsearch", cmd_gridsearch, "select hyperparameters by validation AE")
    sp.add_argument("train")
    sp.add_argument("--spec", help="pipeline spec, inline JSON or file")
    sp.add_argument("--grid", help="grid, inline JSON or file (default: standard grid)")
    sp.add_argument("--val-fraction", type=float, default=0.4)
    sp.add_argument("--per-class", action="store_true",
                    help="bc_ba only: choose c and class_weight per class")
    sp.add_argument("--report", help="selection report CSV (default stdout)")
    sp.add_argument("--out", help="write the refit pipeline JSON here")
    sp.add_argument("--threads", type=int)
    mlapp(sp)
    seed(sp)

    sp = add("quantify", cmd_quantify, "estimate prevalences with a saved pipeline")
    sp.add_argument("file")
    sp.add_argument("--model", required=True, help="pipeline JSON from train/gridsearch")
    sp.add_argument("--samples", help="samples CSV; default quantifies the whole file")
    sp.add_argument("--out", help="output CSV (default stdout)")

    sp = add("evaluate", cmd_evaluate, "score estimates against true prevalences")
    sp.add_argument("file", help="the data the estimates were made on")
    sp.add_argument("--estimates", required=True, help="CSV from quantify")
    sp.add_argument("--samples", help="samples CSV the estimates refer to")
    sp.add_argument("--reference", help="training file; groups results into shift bins")
    sp.add_argument("--out", help="output CSV (default stdout)")

    sp = add("experiment", cmd_experiment, "run a full experiment from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="output directory (overrides the config)")
    sp.add_argument("--seed", type=int, help="root seed (overrides the config)")
    sp.add_argument("--threads", type=int, help="parallel methods (or MLQUANT_THREADS)")
    sp.add_argument("--markdown", action="store_true", help="also write results.md")

    sp = add("synth", cmd_synth, "write a synthetic correlated-label dataset")
    sp.add_argument("--config", help="generator parameters, inline JSON or file")
    sp.add_argument("--n-classes", type=int, default=6)
    sp.add_argument("--rows", type=int, default=1000)
    sp.add_argument("--d", type=int, default=20)
    sp.add_argument("--rho", type=float, default=0.0, help="latent label correlation")
    sp.add_argument("--out", help="output file (default stdout)")
    sp.add_argument("--seed", type=int, default=None)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command == "synth":
        args.seed_given = args.seed is not None
        args.seed = args.seed or 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("k", "m", "threads"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            print(f"mlquant: error: --{name} must be >= 1", file=sys.stderr)
            return EXIT_USAGE
    try:
        args.func(args)
    except DATA_ERRORS as exc:
        print(f"mlquant {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
