"""Multi-label datasets: data model, svmlight IO, statistics and splitting."""

from collections import Counter
from dataclasses import dataclass, field
import io
import os

import numpy as np
import scipy.sparse as sp

from ._rng import stream

__all__ = [
    "DatasetFormatError",
    "MultiLabelDataset",
    "DatasetStats",
    "load_dataset",
    "save_dataset",
    "parse_svmlight_multilabel",
    "true_prevalence",
    "check_sample",
    "check_prevalence",
    "dataset_stats",
    "stats_csv",
    "STATS_COLUMNS",
    "iterative_stratified_split",
    "remove_rare_classes",
]


class DatasetFormatError(ValueError):
    """Raised for unparseable dataset files; carries the offending line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    """Sparse features plus a binary label matrix.

    ``labels[i, j] == 1`` iff datapoint ``i`` carries class ``j``. Rows with no
    label at all are legal. Arrays are made read-only on construction.
    """

    features: sp.csr_matrix
    labels: np.ndarray
    class_names: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        X = sp.csr_matrix(self.features, dtype=np.float64)
        Y = np.asarray(self.labels)
        if Y.ndim != 2:
            raise ValueError(f"labels must be 2-d, got shape {Y.shape}")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"features have {X.shape[0]} rows but labels have {Y.shape[0]}")
        if Y.size and not np.isin(Y, (0, 1)).all():
            raise ValueError("label entries must be 0 or 1")
        names = tuple(str(c) for c in self.class_names)
        if len(names) != Y.shape[1]:
            raise ValueError(
                f"{len(names)} class names for {Y.shape[1]} label columns")
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        Y = Y.astype(np.uint8, copy=True)
        Y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", Y)
        object.__setattr__(self, "class_names", names)

    @property
    def n_rows(self):
        return self.labels.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return self.labels.shape[1]

    def __len__(self):
        return self.n_rows

    def prevalence(self):
        return true_prevalence(self, np.arange(self.n_rows))

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return MultiLabelDataset(self.features[idx], self.labels[idx],
                                 self.class_names, dict(self.metadata))

    def select_classes(self, class_ids):
        """Keep only the label columns ``class_ids`` (in the given order)."""
        ids = np.asarray(class_ids, dtype=np.intp)
        return MultiLabelDataset(self.features, self.labels[:, ids],
                                 [self.class_names[i] for i in ids],
                                 dict(self.metadata))

    def with_features(self, n_features):
        """Pad (never truncate) the feature space to ``n_features`` columns."""
        if n_features < self.n_features:
            raise ValueError("cannot shrink the feature space")
        X = self.features.copy()
        X.resize((self.n_rows, n_features))
        return MultiLabelDataset(X, self.labels, self.class_names,
                                 dict(self.metadata))


# --------------------------------------------------------------------------
# svmlight_multilabel IO
# --------------------------------------------------------------------------

def _parse_header(tokens):
    if len(tokens) != 3 or any(":" in t or "," in t for t in tokens):
        return None
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        return None
    if min(values) < 0:
        return None
    return values


def parse_svmlight_multilabel(lines, n_classes=None, n_features=None):
    """Parse an iterable of text lines into a :class:`MultiLabelDataset`.

    Each line is ``<labels> <fid>:<val> ...`` where ``<labels>`` is a
    comma-separated list of 0-based class ids (possibly empty, in which case
    the line starts with whitespace). Feature ids are 0-based column indices.
    An optional first line ``N D L`` fixes the row, feature and class counts.
    ``#`` starts a comment.
    """
    rows, cols, vals = [], [], []
    label_rows, row_lines = [], []
    header = None
    max_fid, max_label = -1, -1
    seen_content = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].rstrip("\r\n")
        if not line.strip():
            continue
        if not seen_content:
            seen_content = True
            header = _parse_header(line.split())
            if header is not None:
                continue
        if line[0].isspace():
            label_field, feats = "", line.split()
        else:
            parts = line.split()
            label_field, feats = parts[0], parts[1:]
        if ":" in label_field:
            raise DatasetFormatError(
                f"expected a label field before features, got {label_field!r}", lineno)
        labels = []
        if label_field:
            for tok in label_field.split(","):
                try:
                    lab = int(tok)
                except ValueError:
                    raise DatasetFormatError(f"non-numeric label {tok!r}", lineno) from None
                if lab < 0:
                    raise DatasetFormatError(f"negative label id {lab}", lineno)
                labels.append(lab)
                max_label = max(max_label, lab)
        r = len(label_rows)
        label_rows.append(labels)
        row_lines.append(lineno)
        for tok in feats:
            fid, sep, val = tok.partition(":")
            if not sep:
                raise DatasetFormatError(f"malformed feature {tok!r}", lineno)
            try:
                fid = int(fid)
                val = float(val)
            except ValueError:
                raise DatasetFormatError(f"non-numeric feature {tok!r}", lineno) from None
            if fid < 0:
                raise DatasetFormatError(f"negative feature id {fid}", lineno)
            max_fid = max(max_fid, fid)
            rows.append(r)
            cols.append(fid)
            vals.append(val)

    n_rows = len(label_rows)
    if header is not None:
        h_rows, h_features, h_classes = header
        if h_rows != n_rows:
            raise DatasetFormatError(f"header declares {h_rows} rows, found {n_rows}")
        n_features = h_features if n_features is None else n_features
        n_classes = h_classes if n_classes is None else n_classes
    if n_classes is None:
        n_classes = max_label + 1
    elif max_label >= n_classes:
        bad = next(i for i, labs in enumerate(label_rows) if labs and max(labs) >= n_classes)
        raise DatasetFormatError(
            f"label id {max(label_rows[bad])} >= declared class count {n_classes}",
            row_lines[bad])
    if n_features is None:
        n_features = max_fid + 1
    elif max_fid >= n_features:
        raise DatasetFormatError(
            f"feature id {max_fid} >= declared feature count {n_features}")

    X = sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_features), dtype=np.float64)
    X.sum_duplicates()
    X.eliminate_zeros()
    Y = np.zeros((n_rows, n_classes), dtype=np.uint8)
    for r, labs in enumerate(label_rows):
        Y[r, labs] = 1
    names = [f"y{i}" for i in range(n_classes)]
    return MultiLabelDataset(X, Y, names)


def load_dataset(path, format="svmlight_multilabel", n_classes=None, n_features=None):
    """Load a dataset file. Only the multi-label svmlight variant is supported."""
    if format != "svmlight_multilabel":
        raise ValueError(f"unsupported dataset format {format!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    return parse_svmlight_multilabel(lines, n_classes=n_classes, n_features=n_features)


def save_dataset(dataset, path_or_buffer, header=True):
    """Write ``dataset`` in svmlight_multilabel format (``%.17g`` values)."""
    out = io.StringIO()
    if header:
        out.write(f"{dataset.n_rows} {dataset.n_features} {dataset.n_classes}\n")
    X = dataset.features.tocsr()
    X.sort_indices()
    for i in range(dataset.n_rows):
        labs = ",".join(str(j) for j in np.flatnonzero(dataset.labels[i]))
        start, end = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{c}:{v:.17g}" for c, v in zip(X.indices[start:end], X.data[start:end]))
        if not feats and dataset.n_features:
            # keeps featureless rows from reading back as blank lines
            feats = "0:0"
        out.write(f"{labs} {feats}".rstrip() + "\n" if labs else f" {feats}\n")
    text = out.getvalue()
    if hasattr(path_or_buffer, "write"):
        path_or_buffer.write(text)
    else:
        with open(path_or_buffer, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# samples and prevalence
# --------------------------------------------------------------------------

def check_sample(indices, n_rows):
    """Validate a sample (non-empty, unique, in range); return it as an int array."""
    idx = np.asarray(indices, dtype=np.intp).ravel()
    if idx.size == 0:
        raise ValueError("sample is empty")
    if idx.min() < 0 or idx.max() >= n_rows:
        raise IndexError(f"sample indices out of range [0, {n_rows})")
    if np.unique(idx).size != idx.size:
        raise ValueError("sample contains duplicate indices")
    return idx


def check_prevalence(values, kind="multi_label", atol=1e-9):
    """Validate a prevalence vector of the given kind and return it as floats."""
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("prevalence vector must be 1-d")
    if np.any(p < -atol) or np.any(p > 1 + atol) or not np.all(np.isfinite(p)):
        raise ValueError("prevalence values must lie in [0, 1]")
    if kind == "simplex":
        if abs(p.sum() - 1.0) > atol:
            raise ValueError(f"simplex prevalence sums to {p.sum()!r}")
    elif kind != "multi_label":
        raise ValueError(f"unknown prevalence kind {kind!r}")
    return p


def true_prevalence(dataset, sample):
    """Per-class fraction of the sampled rows that carry each label."""
    Y = dataset.labels if isinstance(dataset, MultiLabelDataset) else np.asarray(dataset)
    idx = np.asarray(sample, dtype=np.intp).ravel()
    if idx.size == 0:
        raise ValueError("sample is empty")
    return Y[idx].sum(axis=0, dtype=np.int64) / idx.size


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------

STATS_COLUMNS = ("Classes", "Train", "Test", "Features", "Card", "Dens",
                 "Div", "NormDiv", "PUniq", "PMax")


@dataclass(frozen=True)
class DatasetStats:
    card: float
    dens: float
    div: int
    norm_div: float
    p_uniq: float
    p_max: float


def dataset_stats(dataset):
    """Label cardinality, density, diversity and labelset concentration."""
    Y = dataset.labels
    n_rows, n_classes = Y.shape
    if n_rows < 1:
        raise ValueError("dataset has no rows")
    card = float(Y.sum(dtype=np.int64)) / n_rows
    counts = Counter(map(bytes, np.packbits(Y, axis=1)))
    div = len(counts)
    return DatasetStats(
        card=card,
        dens=card / n_classes,
        div=div,
        norm_div=div / n_classes,
        p_uniq=sum(1 for c in counts.values() if c == 1) / n_rows,
        p_max=max(counts.values()) / n_rows,
    )


def stats_csv(train, test=None, header=True):
    """One CSV row in the column order of the usual dataset summary table.

    Label statistics are computed on the training set.
    """
    st = dataset_stats(train)
    row = [train.n_classes, train.n_rows, 0 if test is None else test.n_rows,
           train.n_features, f"{st.card:.3f}", f"{st.dens:.3f}", st.div,
           f"{st.norm_div:.3f}", f"{st.p_uniq:.3f}", f"{st.p_max:.3f}"]
    lines = [",".join(STATS_COLUMNS)] if header else []
    lines.append(",".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# splitting and cleaning
# --------------------------------------------------------------------------

def _pick(candidates, rng):
    return candidates[0] if len(candidates) == 1 else rng.choice(candidates)


def _refine_by_swaps(Y, part_of, fr, max_steps):
    """Swap rows between parts while that lowers the squared label-count deviation.

    Part sizes are unchanged. Rows are grouped by labelset, so each step is a
    small dense search over pairs of distinct labelsets.
    """
    Yi = Y.astype(np.int64)
    targets = np.outer(fr, Yi.sum(axis=0))
    k = fr.size
    for _ in range(max_steps):
        counts = np.stack([Yi[part_of == j].sum(axis=0) for j in range(k)])
        dev = counts - targets
        best = (-1e-9, None)
        for a in range(k):
            rows_a = np.flatnonzero(part_of == a)
            if rows_a.size == 0:
                continue
            ls_a, first_a = np.unique(Yi[rows_a], axis=0, return_index=True)
            for b in range(a + 1, k):
                rows_b = np.flatnonzero(part_of == b)
                if rows_b.size == 0:
                    continue
                ls_b, first_b = np.unique(Yi[rows_b], axis=0, return_index=True)
                # moving labelset ls_b[j] into a and ls_a[i] into b
                delta = ls_b[None, :, :] - ls_a[:, None, :]
                gain = 2 * (delta * (dev[a] - dev[b])).sum(axis=2) + 2 * (delta ** 2).sum(axis=2)
                i, j = np.unravel_index(np.argmin(gain), gain.shape)
                if gain[i, j] < best[0]:
                    best = (gain[i, j], (rows_a[first_a[i]], a, rows_b[first_b[j]], b))
        if best[1] is None:
            return
        r, a, q, b = best[1]
        part_of[r], part_of[q] = b, a


def iterative_stratified_split(dataset, fractions, seed=0, refine=True):
    """Split rows into parts with per-label positive counts proportional to ``fractions``.

    Greedy iterative stratification: the label with the fewest unassigned
    positives is processed first, and each of its rows goes to the part with
    the greatest remaining demand for that label. Ties are broken by the
    greatest remaining total demand, then by the seeded generator. Rows with
    no label are assigned last, to the part with the greatest remaining
    total demand.

    Parameters
    ----------
    dataset : MultiLabelDataset or array of shape (n_rows, n_classes)
    fractions : sequence of positive floats summing to 1
    seed : int

    Returns
    -------
    list of sorted index arrays, one per fraction.
    """
    Y = dataset.labels if isinstance(dataset, MultiLabelDataset) else np.asarray(dataset)
    Y = Y.astype(bool)
    fr = np.asarray(fractions, dtype=np.float64).ravel()
    if fr.size == 0 or np.any(fr <= 0):
        raise ValueError("fractions must be positive")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fr.sum()!r}")
    rng = stream(seed, "iterative_stratification")
    n_rows = Y.shape[0]
    part_of = np.full(n_rows, -1, dtype=np.intp)
    if fr.size == 1:
        return [np.arange(n_rows)]

    demand_total = fr * n_rows
    demand_label = np.outer(fr, Y.sum(axis=0))
    remaining = Y.sum(axis=0).astype(np.int64)
    unassigned = np.ones(n_rows, dtype=bool)
    tol = 1e-9

    def assign(r, j):
        part_of[r] = j
        unassigned[r] = False
        demand_total[j] -= 1
        labs = Y[r]
        demand_label[j, labs] -= 1
        remaining[labs] -= 1

    while True:
        active = np.flatnonzero(remaining > 0)
        if active.size == 0:
            break
        lab = active[np.argmin(remaining[active])]
        for r in np.flatnonzero(unassigned & Y[:, lab]):
            dl = demand_label[:, lab]
            best = np.flatnonzero(dl >= dl.max() - tol)
            if best.size > 1:
                dt = demand_total[best]
                best = best[dt >= dt.max() - tol]
            assign(r, _pick(best, rng))

    for r in np.flatnonzero(unassigned):
        best = np.flatnonzero(demand_total >= demand_total.max() - tol)
        assign(r, _pick(best, rng))

    if refine:
        _refine_by_swaps(Y, part_of, fr, max_steps=10 * n_rows)
    return [np.flatnonzero(part_of == j) for j in range(fr.size)]


def remove_rare_classes(dataset, min_train_positives=5):
    """Drop classes with fewer than ``min_train_positives`` positive rows.

    Apply this to the training set, then carry the surviving codeframe over
    to test data with ``test.select_classes(kept_ids)`` where ``kept_ids``
    is available as ``result.metadata["kept_class_ids"]``.
    """
    if min_train_positives < 0:
        raise ValueError("min_train_positives must be >= 0")
    counts = dataset.labels.sum(axis=0, dtype=np.int64)
    keep = np.flatnonzero(counts >= min_train_positives)
    if keep.size == 0:
        raise ValueError("every class has fewer than "
                         f"{min_train_positives} positives; nothing left")
    out = dataset.select_classes(keep)
    out.metadata["kept_class_ids"] = [int(i) for i in keep]
    return out
