"""Sample generation for evaluation: ML-APP, uniform sampling, shift bins."""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np

from ._rng import stream
from .dataset import true_prevalence
from .metrics import ae_multilabel

__all__ = [
    "MLAPPParams",
    "GeneratedSample",
    "ShiftBins",
    "BIN_NAMES",
    "positives_for",
    "default_grid",
    "mlapp_generate",
    "uniform_generate",
    "compute_shift",
    "bin_shifts",
    "write_samples_csv",
    "read_samples_csv",
]

BIN_NAMES = ("low", "mid", "high")


def default_grid(step=0.05):
    """``0, step, 2*step, ..., 1`` with values rounded to kill float drift."""
    n = int(round(1.0 / step))
    return tuple(round(i / n, 12) for i in range(n + 1))


@dataclass(frozen=True)
class MLAPPParams:
    """Sample size ``k``, repetitions ``m`` per grid point, prevalence grid ``grid``."""

    k: int = 100
    m: int = 1
    grid: tuple = field(default_factory=default_grid)
    seed: int = 0

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not grid:
            raise ValueError("grid must not be empty")
        if any(g < 0 or g > 1 for g in grid):
            raise ValueError("grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")

    @property
    def max_samples_per_class(self):
        return self.m * len(self.grid)


@dataclass
class GeneratedSample:
    indices: np.ndarray
    targeted_class: int = -1
    targeted_prevalence: float = float("nan")
    true_prevalence: np.ndarray = None
    shift: float = float("nan")

    @property
    def size(self):
        return self.indices.size


def positives_for(k, g):
    """``ceil(k * g)``, robust to representation error (``100 * 0.07`` is not 7)."""
    return int(math.ceil(round(k * g, 9)))


def compute_shift(train_prev, sample_prev):
    """Prior probability shift as AE between the two prevalence vectors."""
    return ae_multilabel(train_prev, sample_prev)


def mlapp_generate(dataset, params, reference_prevalence=None):
    """Multi-label artificial prevalence protocol.

    For each class and grid value ``g``, draw ``m`` samples of ``k`` rows
    holding exactly ``ceil(k g)`` positives of that class, positives and
    negatives each drawn without replacement from their pools. A (class, g)
    pair is skipped unless both pools are large enough. Pools are not
    depleted between samples. Each pair uses its own random sub-stream.

    ``reference_prevalence`` (usually the training prevalence) fills in
    each sample's ``shift``.
    """
    Y = dataset.labels
    k = params.k
    if k > Y.shape[0]:
        raise ValueError(f"sample size {k} exceeds the {Y.shape[0]} available rows")
    out = []
    for c in range(Y.shape[1]):
        pos_pool = np.flatnonzero(Y[:, c])
        neg_pool = np.flatnonzero(Y[:, c] == 0)
        for j, g in enumerate(params.grid):
            n_pos = positives_for(k, g)
            n_neg = k - n_pos
            if pos_pool.size < n_pos or neg_pool.size < n_neg:
                continue
            rng = stream(params.seed, "mlapp", c, j)
            for _ in range(params.m):
                idx = np.concatenate([rng.choice(pos_pool, n_pos, replace=False),
                                      rng.choice(neg_pool, n_neg, replace=False)])
                out.append(_make(dataset, idx, c, g, reference_prevalence))
    return out


def uniform_generate(dataset, k, count, seed=0, reference_prevalence=None):
    """``count`` samples of ``k`` rows drawn uniformly without replacement."""
    n = dataset.n_rows
    if k > n:
        raise ValueError(f"sample size {k} exceeds the {n} available rows")
    rng = stream(seed, "uniform")
    return [_make(dataset, rng.choice(n, k, replace=False), -1, float("nan"),
                  reference_prevalence) for _ in range(count)]


def _make(dataset, idx, cls, g, reference):
    idx = np.asarray(idx, dtype=np.intp)
    prev = true_prevalence(dataset, idx)
    shift = float("nan") if reference is None else compute_shift(reference, prev)
    return GeneratedSample(idx, int(cls), float(g), prev, shift)


@dataclass(frozen=True)
class ShiftBins:
    """Three equal-width bins over ``[lo, hi]``."""

    lo: float
    hi: float

    @property
    def edges(self):
        width = (self.hi - self.lo) / 3.0
        return (self.lo + width, self.lo + 2.0 * width)

    def assign(self, shift):
        if self.hi <= self.lo:
            return "low"
        e1, e2 = self.edges
        if shift < e1:
            return "low"
        if shift < e2:
            return "mid"
        return "high"


def bin_shifts(samples):
    """Bin samples (or raw shift values) into low/mid/high thirds of the observed range.

    Bins are left-closed and right-open, except that the top bin also
    includes the maximum. Returns ``(labels, bins)``.
    """
    shifts = [s.shift if isinstance(s, GeneratedSample) else float(s) for s in samples]
    if not shifts:
        raise ValueError("need at least one sample")
    if any(math.isnan(s) for s in shifts):
        raise ValueError("sample shift not computed")
    bins = ShiftBins(min(shifts), max(shifts))
    return [bins.assign(s) for s in shifts], bins


# --------------------------------------------------------------------------
# CSV persistence
# --------------------------------------------------------------------------

SAMPLE_COLUMNS = ("sample_id", "targeted_class", "targeted_prevalence", "shift", "indices")


def _fmt(x):
    return "" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def write_samples_csv(samples, path_or_buffer, header_lines=()):
    """One row per sample; indices as a space-separated list."""
    out = io.StringIO()
    for line in header_lines:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SAMPLE_COLUMNS)
    for i, s in enumerate(samples):
        w.writerow([i, s.targeted_class, _fmt(s.targeted_prevalence), _fmt(s.shift),
                    " ".join(str(int(j)) for j in s.indices)])
    text = out.getvalue()
    if hasattr(path_or_buffer, "write"):
        path_or_buffer.write(text)
    else:
        with open(path_or_buffer, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_samples_csv(path_or_buffer, dataset=None):
    """Read samples back; with ``dataset`` the true prevalence is recomputed."""
    if hasattr(path_or_buffer, "read"):
        text = path_or_buffer.read()
    else:
        with open(path_or_buffer, encoding="utf-8") as fh:
            text = fh.read()
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(rows)
    missing = set(SAMPLE_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"samples file lacks columns {sorted(missing)}")
    out = []
    for r in reader:
        idx = np.array([int(t) for t in r["indices"].split()], dtype=np.intp)
        tp = r["targeted_prevalence"]
        sh = r["shift"]
        prev = None if dataset is None else true_prevalence(dataset, idx)
        out.append(GeneratedSample(idx, int(r["targeted_class"]),
                                   float(tp) if tp else float("nan"), prev,
                                   float(sh) if sh else float("nan")))
    return out
