"""Score transforms, correlation-based class similarity, count baselines, stats.

The central object is the class-similarity matrix: for each pair of classes,
the population Pearson correlation between their score columns taken over the
sample set,

    rho[j1, j2] = (E[P_j1 * P_j2] - E[P_j1] E[P_j2]) / (sigma_j1 * sigma_j2)

with ``E`` the mean over samples. The Spearman variant is by definition the
same quantity computed on per-sample ranks. Classes whose score column is
exactly constant carry no correlation signal; their rows and columns
(diagonal included) are set to 0 and the class index is reported in
``degenerate_classes`` so downstream stages can treat them explicitly instead
of tripping over NaNs.

All functions are pure, returned arrays are read-only, and within-pair
summation order is fixed (ascending sample index), so results do not depend
on how many workers the caller uses.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigInvalid,
    EmptyInput,
    JSONSchemaError,
    MultiLabelInput,
    NonFiniteValue,
    SizeMismatch,
    TooFewSamples,
    UnknownLabel,
    WrongKind,
)
from .ingest import (
    SCORE_KINDS,
    LabelData,
    ScoreMatrix,
    _check_class_names,
    _freeze,
    _header_counts,
    _header_names,
    _payload_array,
    read_bsm1,
    write_bsm1,
)

MEASURES = ("pearson", "spearman")
COUNT_KINDS = ("cooccurrence", "confusion")
BOUND_TOL = 1e-12


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric m x m matrix of per-class-pair correlations in [-1, 1]."""

    class_names: tuple[str, ...]
    values: np.ndarray
    measure: str
    source_kind: str
    degenerate_classes: frozenset[int] = frozenset()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        m = len(self.class_names)
        if values.shape != (m, m):
            raise ConfigInvalid(
                f"similarity values must be {m}x{m}, got {values.shape}")
        _check_class_names(self.class_names)
        if self.measure not in MEASURES:
            raise ConfigInvalid(f"unknown measure {self.measure!r}")
        if self.source_kind not in SCORE_KINDS:
            raise ConfigInvalid(f"unknown source kind {self.source_kind!r}")
        degenerate = frozenset(int(i) for i in self.degenerate_classes)
        if any(i < 0 or i >= m for i in degenerate):
            raise ConfigInvalid("degenerate class index out of range")
        if not np.all(np.isfinite(values)):
            raise ConfigInvalid("similarity values must be finite")
        if not np.array_equal(values, values.T):
            raise ConfigInvalid("similarity values must be exactly symmetric")
        if values.size and (values.min() < -1.0 - BOUND_TOL
                            or values.max() > 1.0 + BOUND_TOL):
            raise ConfigInvalid("similarity values must lie in [-1, 1]")
        diag = np.diagonal(values)
        for i in range(m):
            want = 0.0 if i in degenerate else 1.0
            if diag[i] != want:
                raise ConfigInvalid(
                    f"diagonal entry {i} is {diag[i]!r}, expected {want}")
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "degenerate_classes", degenerate)
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class CountMatrix:
    """m x m non-negative integer counts: label co-occurrence or confusion."""

    class_names: tuple[str, ...]
    counts: np.ndarray
    kind: str

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        m = len(self.class_names)
        if counts.shape != (m, m):
            raise ConfigInvalid(f"counts must be {m}x{m}, got {counts.shape}")
        _check_class_names(self.class_names)
        if self.kind not in COUNT_KINDS:
            raise ConfigInvalid(f"unknown count kind {self.kind!r}")
        if counts.size and counts.min() < 0:
            raise ConfigInvalid("counts must be non-negative")
        if self.kind == "cooccurrence" and not np.array_equal(counts, counts.T):
            raise ConfigInvalid("co-occurrence counts must be symmetric")
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "counts", _freeze(counts))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class DistributionStats:
    """Population moments plus an equal-width histogram of a value sample."""

    count: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    histogram: tuple[tuple[float, float, int], ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "count": self.count,
                "mean": self.mean,
                "std": self.std,
                "skewness": self.skewness,
                "excess_kurtosis": self.excess_kurtosis,
                "histogram": [list(b) for b in self.histogram],
            },
            indent=2,
        )


# ---------------------------------------------------------------------------
# score transforms
# ---------------------------------------------------------------------------

def softmax_rows(scores: ScoreMatrix) -> ScoreMatrix:
    """Row-wise shifted softmax: logits to probabilities, overflow-safe."""
    if scores.kind != "logit":
        raise WrongKind(f"softmax_rows expects logits, got {scores.kind!r}")
    shifted = scores.values - scores.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return ScoreMatrix(
        class_names=scores.class_names,
        values=probs,
        kind="probability",
        sample_ids=scores.sample_ids,
    )


def rank_rows(scores: ScoreMatrix) -> ScoreMatrix:
    """Replace each row by its ranks (ascending, 1..m, ties averaged).

    The smallest value in a row gets rank 1; a tie spanning ranks r..s gets
    the average (r+s)/2. Every output row sums to exactly m(m+1)/2: average
    ranks are multiples of 0.5, so the float sum telescopes without rounding.
    """
    v = scores.values
    n, m = v.shape
    order = np.argsort(v, axis=1, kind="stable")
    sv = np.take_along_axis(v, order, axis=1)
    pos = np.arange(m)
    # First/last sorted position of each tie run, per row.
    new_run = np.ones((n, m), dtype=bool)
    new_run[:, 1:] = sv[:, 1:] != sv[:, :-1]
    first = np.maximum.accumulate(np.where(new_run, pos, 0), axis=1)
    run_end = np.ones((n, m), dtype=bool)
    run_end[:, :-1] = new_run[:, 1:]
    last = np.minimum.accumulate(
        np.where(run_end, pos, m - 1)[:, ::-1], axis=1)[:, ::-1]
    avg_rank = (first + last) / 2.0 + 1.0
    ranks = np.empty_like(v)
    np.put_along_axis(ranks, order, avg_rank, axis=1)
    return ScoreMatrix(
        class_names=scores.class_names,
        values=ranks,
        kind="rank",
        sample_ids=scores.sample_ids,
    )


# ---------------------------------------------------------------------------
# similarity measures
# ---------------------------------------------------------------------------

def _degenerate_columns(values: np.ndarray) -> np.ndarray:
    """Indices of exactly-constant columns (no correlation signal)."""
    if values.shape[0] == 0:
        return np.arange(values.shape[1])
    return np.nonzero(values.min(axis=0) == values.max(axis=0))[0]


def pearson_similarity(scores: ScoreMatrix) -> SimilarityMatrix:
    """Pearson correlation between every pair of class score columns.

    Population moments (the 1/n factors cancel); summation runs in ascending
    sample order inside one matrix product, so the result is reproducible.
    Exact symmetry is enforced by mirroring the upper triangle, and the
    diagonal is written as exactly 1 (or 0 for degenerate classes).
    """
    v = scores.values
    n, m = v.shape
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    centered = v - v.mean(axis=0, keepdims=True)
    cov = centered.T @ centered            # cov[a, b] = sum_i d_ia * d_ib
    norms = np.sqrt(np.diagonal(cov).copy())
    degenerate = _degenerate_columns(v)
    norms[degenerate] = 1.0                # placeholder; rows zeroed below
    sim = cov / np.outer(norms, norms)
    np.clip(sim, -1.0, 1.0, out=sim)
    upper = np.triu(sim, 1)
    sim = upper + upper.T
    np.fill_diagonal(sim, 1.0)
    sim[degenerate, :] = 0.0
    sim[:, degenerate] = 0.0
    return SimilarityMatrix(
        class_names=scores.class_names,
        values=sim,
        measure="pearson",
        source_kind=scores.kind,
        degenerate_classes=frozenset(int(i) for i in degenerate),
    )


def spearman_similarity(scores: ScoreMatrix) -> SimilarityMatrix:
    """Pearson correlation applied to per-sample ranks of the scores.

    Each sample's scores are replaced by their ranks across classes (range
    1..m) before correlating, which makes the measure exactly invariant under
    any strictly increasing per-row transform of the scores.
    """
    base = pearson_similarity(rank_rows(scores))
    return SimilarityMatrix(
        class_names=base.class_names,
        values=base.values,
        measure="spearman",
        source_kind=scores.kind,
        degenerate_classes=base.degenerate_classes,
    )


# ---------------------------------------------------------------------------
# count baselines
# ---------------------------------------------------------------------------

def _class_index(class_names: tuple[str, ...]) -> dict[str, int]:
    return {name: i for i, name in enumerate(class_names)}


def cooccurrence_matrix(labels: LabelData, class_names) -> CountMatrix:
    """Symmetric counts of label pairs appearing in the same sample.

    counts[a][b] is the number of samples whose label set contains both a and
    b; the diagonal is the per-class label frequency.
    """
    class_names = tuple(class_names)
    index = _class_index(class_names)
    m = len(class_names)
    counts = np.zeros((m, m), dtype=np.int64)
    for sid, label_set in zip(labels.sample_ids, labels.labels):
        try:
            idx = sorted(index[name] for name in label_set)
        except KeyError as exc:
            raise UnknownLabel(
                f"sample {sid!r} has label {exc.args[0]!r} "
                f"not among the class names") from None
        for ai, a in enumerate(idx):
            for b in idx[ai:]:
                counts[a, b] += 1
                if a != b:
                    counts[b, a] += 1
    return CountMatrix(class_names=class_names, counts=counts, kind="cooccurrence")


def confusion_matrix(scores: ScoreMatrix, labels: LabelData) -> CountMatrix:
    """Counts of (true class, argmax-predicted class) pairs.

    Defined only for single-labeled data; argmax ties resolve to the lowest
    class index. Row sums equal per-class ground-truth frequencies.
    """
    if labels.n_samples != scores.n_samples:
        raise SizeMismatch(
            f"{labels.n_samples} labeled samples vs {scores.n_samples} score rows")
    index = _class_index(scores.class_names)
    m = scores.n_classes
    predicted = np.argmax(scores.values, axis=1)
    counts = np.zeros((m, m), dtype=np.int64)
    for row, (sid, label_set) in enumerate(zip(labels.sample_ids, labels.labels)):
        if len(label_set) != 1:
            raise MultiLabelInput(
                f"sample {sid!r} carries {len(label_set)} labels; "
                f"confusion counts are defined for single-label data only")
        (name,) = label_set
        if name not in index:
            raise UnknownLabel(f"sample {sid!r} has unknown label {name!r}")
        counts[index[name], predicted[row]] += 1
    return CountMatrix(class_names=scores.class_names, counts=counts, kind="confusion")


# ---------------------------------------------------------------------------
# distribution diagnostics
# ---------------------------------------------------------------------------

def distribution_stats(values, n_bins: int = 32) -> DistributionStats:
    """Population moments and an equal-width histogram of a 1-D sample.

    Skewness is Fisher-Pearson g1 = m3 / m2^(3/2) and kurtosis is excess
    (m4 / m2^2 - 3); both are reported as 0 for constant input. The histogram
    covers [min, max] with n_bins equal bins (one bin when min == max).
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInput("cannot summarize an empty value list")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("distribution input contains non-finite values")
    if n_bins < 1:
        raise ConfigInvalid(f"n_bins must be >= 1, got {n_bins}")
    n = arr.size
    mean = float(arr.mean())
    d = arr - mean
    m2 = float((d * d).mean())
    std = math.sqrt(m2)
    if std > 0.0:
        skew = float((d ** 3).mean()) / m2 ** 1.5
        exkurt = float((d ** 4).mean()) / (m2 * m2) - 3.0
    else:
        skew = 0.0
        exkurt = 0.0
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        bins = ((lo, hi, n),)
    else:
        counts, edges = np.histogram(arr, bins=n_bins, range=(lo, hi))
        bins = tuple(
            (float(edges[i]), float(edges[i + 1]), int(counts[i]))
            for i in range(n_bins)
        )
    return DistributionStats(
        count=n,
        mean=mean,
        std=std,
        skewness=skew,
        excess_kurtosis=exkurt,
        histogram=bins,
    )


def offdiagonal_values(sim: SimilarityMatrix) -> np.ndarray:
    """Strictly-upper-triangle similarities, row-major, skipping degenerate classes."""
    keep = np.array(
        [i for i in range(sim.n_classes) if i not in sim.degenerate_classes],
        dtype=np.intp,
    )
    sub = sim.values[np.ix_(keep, keep)]
    iu = np.triu_indices(len(keep), k=1)
    return _freeze(sub[iu])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_similarity_binary(sim: SimilarityMatrix, dtype: str = "f64") -> bytes:
    if dtype not in ("f32", "f64"):
        raise ConfigInvalid(f"similarity dtype must be f32 or f64, got {dtype!r}")
    header = {
        "magic": "BSM1",
        "n": sim.n_classes,
        "m": sim.n_classes,
        "dtype": dtype,
        "kind": "similarity",
        "classes": list(sim.class_names),
        "measure": sim.measure,
        "source_kind": sim.source_kind,
        "degenerate": sorted(sim.degenerate_classes),
    }
    payload = sim.values.astype("<f4" if dtype == "f32" else "<f8")
    return write_bsm1(header, payload)


def parse_similarity_binary(stream) -> SimilarityMatrix:
    header, payload = read_bsm1(stream)
    if header.get("kind") != "similarity":
        raise JSONSchemaError(
            f"expected a similarity container, got kind {header.get('kind')!r}")
    n, m = _header_counts(header)
    if n != m:
        raise JSONSchemaError(f"similarity container must be square, got {n}x{m}")
    class_names = _header_names(header, "classes", m)
    degenerate = header.get("degenerate", [])
    if not isinstance(degenerate, list) or not all(
            isinstance(i, int) for i in degenerate):
        raise JSONSchemaError("header field 'degenerate' must be a list of ints")
    values = _payload_array(header, payload, n, m).astype(np.float64)
    return SimilarityMatrix(
        class_names=class_names,
        values=values,
        measure=header.get("measure", ""),
        source_kind=header.get("source_kind", ""),
        degenerate_classes=frozenset(degenerate),
    )


def write_counts_binary(cm: CountMatrix) -> bytes:
    header = {
        "magic": "BSM1",
        "n": cm.n_classes,
        "m": cm.n_classes,
        "dtype": "i64",
        "kind": cm.kind,
        "classes": list(cm.class_names),
    }
    return write_bsm1(header, cm.counts.astype("<i8"))


def parse_counts_binary(stream) -> CountMatrix:
    header, payload = read_bsm1(stream)
    if header.get("kind") not in COUNT_KINDS:
        raise JSONSchemaError(
            f"expected a count container, got kind {header.get('kind')!r}")
    n, m = _header_counts(header)
    if n != m:
        raise JSONSchemaError(f"count container must be square, got {n}x{m}")
    class_names = _header_names(header, "classes", m)
    counts = _payload_array(header, payload, n, m)
    return CountMatrix(class_names=class_names, counts=counts, kind=header["kind"])


def _square_csv(class_names, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", *class_names])
    for name, row in zip(class_names, rows):
        writer.writerow([name, *row])
    return buf.getvalue().encode("utf-8")


def write_similarity_csv(sim: SimilarityMatrix) -> bytes:
    """Square CSV for interchange (BSM1 is the lossless round-trip format)."""
    return _square_csv(sim.class_names,
                       ((repr(float(v)) for v in row) for row in sim.values))


def write_counts_csv(cm: CountMatrix) -> bytes:
    return _square_csv(cm.class_names, ((int(x) for x in row) for row in cm.counts))
