"""Parsing, validation, and serialization of score matrices, labels, and taxonomies.

Three file formats are supported, all little-endian and locale-independent:

* **scores CSV** -- UTF-8 text, header row of class names (an optional leading
  ``sample_id`` header cell marks an id column), one numeric row per sample,
  ``.`` as the only decimal separator.
* **BSM1 binary** -- one compact JSON header line terminated by a single
  ``0x0A`` byte, followed by the raw row-major little-endian payload. Used for
  score matrices and, with extra header fields, for similarity and count
  matrices.
* **labels CSV** -- header ``sample_id,labels``; the labels cell holds
  ``|``-separated class names.
* **taxonomy JSON** -- nested ``{"name": ..., "children": [...]}`` objects;
  a node without a ``children`` key is a leaf.

Parsers are pure functions from bytes to values; every value they return is
validated against its type invariants and frozen (numpy buffers are marked
read-only), so results are safe to share across threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import IO, Union

import numpy as np

from .errors import (
    BadMagic,
    ConfigInvalid,
    DuplicateClassName,
    DuplicateLeaf,
    EmptyLabelSet,
    JSONSchemaError,
    MalformedRow,
    NonFiniteValue,
    NonNumericCell,
    RaggedRow,
    RowSumViolation,
    TruncatedPayload,
)

SCORE_KINDS = ("logit", "probability", "rank")
PROB_ROW_SUM_TOL = 1e-6

ByteSource = Union[bytes, bytearray, IO[bytes]]


def _as_bytes(stream: ByteSource) -> bytes:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream)
    return stream.read()


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreMatrix:
    """n_samples x n_classes prediction values of one kind.

    ``values[i, j]`` is the score the classifier assigned to class
    ``class_names[j]`` for sample ``sample_ids[i]``.
    """

    class_names: tuple[str, ...]
    values: np.ndarray
    kind: str
    sample_ids: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigInvalid(f"score values must be 2-D, got shape {values.shape}")
        n, m = values.shape
        if len(self.class_names) != m:
            raise ConfigInvalid(
                f"{len(self.class_names)} class names for {m} columns")
        sample_ids = self.sample_ids or tuple(str(i) for i in range(n))
        if len(sample_ids) != n:
            raise ConfigInvalid(f"{len(sample_ids)} sample ids for {n} rows")
        _check_class_names(self.class_names)
        _check_values(values, self.kind)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "sample_ids", tuple(sample_ids))
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]


def _check_class_names(names) -> None:
    if any(not isinstance(c, str) or not c for c in names):
        raise DuplicateClassName("class names must be non-empty strings")
    if len(set(names)) != len(names):
        seen, dups = set(), []
        for c in names:
            if c in seen:
                dups.append(c)
            seen.add(c)
        raise DuplicateClassName(f"duplicate class names: {sorted(set(dups))}")


def _check_values(values: np.ndarray, kind: str) -> None:
    if kind not in SCORE_KINDS:
        raise ConfigInvalid(f"unknown score kind {kind!r}")
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteValue(f"non-finite value at row {bad[0]}, column {bad[1]}")
    n, m = values.shape
    if kind == "probability":
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise RowSumViolation("probability values must lie in [0, 1]")
        sums = values.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > PROB_ROW_SUM_TOL)[0]
        if bad.size:
            i = int(bad[0])
            raise RowSumViolation(
                f"row {i} sums to {sums[i]!r}, expected 1 within {PROB_ROW_SUM_TOL}")
    elif kind == "rank":
        expected = m * (m + 1) / 2
        sums = values.sum(axis=1)
        bad = np.nonzero(sums != expected)[0]
        if bad.size:
            i = int(bad[0])
            raise RowSumViolation(
                f"rank row {i} sums to {sums[i]!r}, expected exactly {expected}")


@dataclass(frozen=True)
class LabelData:
    """Per-sample ground-truth label sets, possibly multi-label."""

    sample_ids: tuple[str, ...]
    labels: tuple[frozenset[str], ...]

    def __post_init__(self):
        if len(self.sample_ids) != len(self.labels):
            raise ConfigInvalid("sample_ids and labels must have equal length")
        if any(not s for s in self.labels):
            raise EmptyLabelSet("every sample needs at least one label")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "labels", tuple(frozenset(s) for s in self.labels))

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)


@dataclass(frozen=True)
class TaxNode:
    name: str
    children: tuple["TaxNode", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class Taxonomy:
    """Rooted tree whose leaves name classes; internal names are free-form."""

    root: TaxNode

    def leaves(self) -> tuple[str, ...]:
        """Leaf names in depth-first order, children visited in file order."""
        out: list[str] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node.name)
            else:
                stack.extend(reversed(node.children))
        return tuple(out)


@dataclass(frozen=True)
class ValidationReport:
    """Alignment problems between a score matrix and companion inputs.

    ``unknown_classes`` -- names referenced by labels or taxonomy leaves that
    are not score classes; ``missing_classes`` -- score classes a provided
    taxonomy does not cover; ``sample_id_mismatches`` -- label sample ids not
    present in the score matrix.
    """

    unknown_classes: tuple[str, ...] = ()
    missing_classes: tuple[str, ...] = ()
    sample_id_mismatches: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not (self.unknown_classes or self.missing_classes
                    or self.sample_id_mismatches)

    def to_json(self) -> str:
        return json.dumps(
            {
                "ok": self.ok,
                "unknown_classes": list(self.unknown_classes),
                "missing_classes": list(self.missing_classes),
                "sample_id_mismatches": list(self.sample_id_mismatches),
            },
            indent=2,
        )


# ---------------------------------------------------------------------------
# CSV scores
# ---------------------------------------------------------------------------

def parse_scores_csv(stream: ByteSource, kind: str) -> ScoreMatrix:
    """Parse a UTF-8 scores CSV into a validated ScoreMatrix.

    The first header cell being exactly ``sample_id`` (case-sensitive) marks
    column 0 as the id column; otherwise every header cell is a class name and
    sample ids default to the row index.
    """
    text = _as_bytes(stream).decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MalformedRow("empty CSV: missing header row")
    header = rows[0]
    has_ids = bool(header) and header[0] == "sample_id"
    class_names = tuple(header[1:] if has_ids else header)
    if not class_names:
        raise MalformedRow("header declares no class columns")
    _check_class_names(class_names)

    m = len(class_names)
    sample_ids: list[str] = []
    values = np.empty((len(rows) - 1, m), dtype=np.float64)
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise RaggedRow(
                f"row {r} has {len(row)} cells, header has {len(header)}")
        cells = row[1:] if has_ids else row
        if has_ids:
            sample_ids.append(row[0])
        for c, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(
                    f"row {r}, column {c}: {cell!r} is not a number") from None
            if not math.isfinite(v):
                raise NonFiniteValue(f"row {r}, column {c}: {cell!r}")
            values[r - 1, c] = v
    return ScoreMatrix(
        class_names=class_names,
        values=values,
        kind=kind,
        sample_ids=tuple(sample_ids),
    )


def write_scores_csv(matrix: ScoreMatrix) -> bytes:
    """Inverse of parse_scores_csv; always writes the sample_id column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", *matrix.class_names])
    for sid, row in zip(matrix.sample_ids, matrix.values):
        writer.writerow([sid, *(repr(float(v)) for v in row)])
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# BSM1 binary container
# ---------------------------------------------------------------------------

_DTYPES = {"f32": "<f4", "f64": "<f8", "i64": "<i8"}


def write_bsm1(header: dict, payload: np.ndarray) -> bytes:
    """Encode a BSM1 container: compact JSON header line + raw payload.

    Key order in ``header`` is preserved verbatim, which makes the encoding
    canonical: identical inputs produce identical bytes.
    """
    head = json.dumps(header, ensure_ascii=False, separators=(",", ":"))
    return head.encode("utf-8") + b"\n" + payload.tobytes(order="C")


def read_bsm1(stream: ByteSource) -> tuple[dict, bytes]:
    """Split a BSM1 container into its header dict and raw payload bytes."""
    raw = _as_bytes(stream)
    nl = raw.find(b"\x0a")
    if nl < 0:
        raise JSONSchemaError("missing header line terminator")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise JSONSchemaError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise JSONSchemaError("header must be a JSON object")
    if header.get("magic") != "BSM1":
        raise BadMagic(f"bad magic {header.get('magic')!r}, expected 'BSM1'")
    return header, raw[nl + 1:]


def _header_counts(header: dict) -> tuple[int, int]:
    for key in ("n", "m"):
        if not isinstance(header.get(key), int) or header[key] < 0:
            raise JSONSchemaError(f"header field {key!r} must be a non-negative int")
    return header["n"], header["m"]


def _payload_array(header: dict, payload: bytes, n: int, m: int) -> np.ndarray:
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise JSONSchemaError(f"unsupported dtype {dtype!r}")
    np_dtype = np.dtype(_DTYPES[dtype])
    need = n * m * np_dtype.itemsize
    if len(payload) < need:
        raise TruncatedPayload(
            f"payload holds {len(payload)} bytes, need {need} for {n}x{m} {dtype}")
    if len(payload) > need:
        raise JSONSchemaError(
            f"payload holds {len(payload)} bytes, expected exactly {need}")
    return np.frombuffer(payload, dtype=np_dtype).reshape(n, m)


def _header_names(header: dict, key: str, expect: int) -> tuple[str, ...]:
    names = header.get(key)
    if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
        raise JSONSchemaError(f"header field {key!r} must be a list of strings")
    if len(names) != expect:
        raise JSONSchemaError(f"{len(names)} entries in {key!r}, expected {expect}")
    return tuple(names)


def parse_scores_binary(stream: ByteSource) -> ScoreMatrix:
    """Parse a BSM1 score container; exact inverse of write_scores_binary."""
    header, payload = read_bsm1(stream)
    n, m = _header_counts(header)
    if header.get("kind") not in SCORE_KINDS:
        raise JSONSchemaError(f"unknown score kind {header.get('kind')!r}")
    class_names = _header_names(header, "classes", m)
    sample_ids: tuple[str, ...] = ()
    if "sample_ids" in header:
        sample_ids = _header_names(header, "sample_ids", n)
    values = _payload_array(header, payload, n, m).astype(np.float64)
    return ScoreMatrix(
        class_names=class_names,
        values=values,
        kind=header["kind"],
        sample_ids=sample_ids,
    )


def write_scores_binary(matrix: ScoreMatrix, dtype: str = "f64") -> bytes:
    """Serialize a ScoreMatrix to BSM1 bytes; f64 round-trips losslessly."""
    if dtype not in ("f32", "f64"):
        raise ConfigInvalid(f"score dtype must be f32 or f64, got {dtype!r}")
    header = {
        "magic": "BSM1",
        "n": matrix.n_samples,
        "m": matrix.n_classes,
        "dtype": dtype,
        "kind": matrix.kind,
        "classes": list(matrix.class_names),
        "sample_ids": list(matrix.sample_ids),
    }
    payload = matrix.values.astype(_DTYPES[dtype])
    return write_bsm1(header, payload)


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def parse_labels(stream: ByteSource) -> LabelData:
    """Parse a labels CSV (header ``sample_id,labels``, ``|``-separated sets)."""
    text = _as_bytes(stream).decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["sample_id", "labels"]:
        raise MalformedRow("labels CSV must start with header 'sample_id,labels'")
    sample_ids: list[str] = []
    label_sets: list[frozenset[str]] = []
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise MalformedRow(f"row {r} has {len(row)} cells, expected 2")
        sid, cell = row
        names = [part for part in cell.split("|") if part]
        if not names:
            raise EmptyLabelSet(f"row {r} (sample {sid!r}) has no labels")
        sample_ids.append(sid)
        label_sets.append(frozenset(names))
    return LabelData(sample_ids=tuple(sample_ids), labels=tuple(label_sets))


def write_labels_csv(labels: LabelData) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "labels"])
    for sid, names in zip(labels.sample_ids, labels.labels):
        writer.writerow([sid, "|".join(sorted(names))])
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# taxonomy
# ---------------------------------------------------------------------------

def _parse_tax_node(obj, path: str) -> TaxNode:
    if not isinstance(obj, dict):
        raise JSONSchemaError(f"{path}: node must be a JSON object")
    unknown = set(obj) - {"name", "children"}
    if unknown:
        raise JSONSchemaError(f"{path}: unknown keys {sorted(unknown)}")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise JSONSchemaError(f"{path}: 'name' must be a non-empty string")
    if "children" not in obj:
        return TaxNode(name=name)
    children = obj["children"]
    if not isinstance(children, list) or not children:
        raise JSONSchemaError(f"{path}: 'children' must be a non-empty list")
    return TaxNode(
        name=name,
        children=tuple(
            _parse_tax_node(child, f"{path}.children[{i}]")
            for i, child in enumerate(children)
        ),
    )


def parse_taxonomy(stream: ByteSource) -> Taxonomy:
    """Parse nested ``{name, children}`` JSON; a missing children key = leaf."""
    try:
        obj = json.loads(_as_bytes(stream).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise JSONSchemaError(f"taxonomy is not valid JSON: {exc}") from None
    tax = Taxonomy(root=_parse_tax_node(obj, "root"))
    leaves = tax.leaves()
    if len(set(leaves)) != len(leaves):
        dups = sorted({x for x in leaves if leaves.count(x) > 1})
        raise DuplicateLeaf(f"leaf names occur more than once: {dups}")
    return tax


def write_taxonomy_json(tax: Taxonomy) -> bytes:
    def encode(node: TaxNode):
        if node.is_leaf:
            return {"name": node.name}
        return {"name": node.name, "children": [encode(c) for c in node.children]}

    return (json.dumps(encode(tax.root), ensure_ascii=False, indent=2) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------

def validate_alignment(
    scores: ScoreMatrix,
    labels: LabelData | None = None,
    taxonomy: Taxonomy | None = None,
) -> ValidationReport:
    """Cross-check companion inputs against a score matrix.

    Problems are reported, not raised; ``report.ok`` is True iff every list
    is empty.
    """
    classes = set(scores.class_names)
    unknown: set[str] = set()
    missing: set[str] = set()
    id_mismatches: list[str] = []
    if labels is not None:
        for s in labels.labels:
            unknown.update(s - classes)
        known_ids = set(scores.sample_ids)
        id_mismatches = [sid for sid in labels.sample_ids if sid not in known_ids]
    if taxonomy is not None:
        leaves = set(taxonomy.leaves())
        unknown.update(leaves - classes)
        missing.update(classes - leaves)
    return ValidationReport(
        unknown_classes=tuple(sorted(unknown)),
        missing_classes=tuple(sorted(missing)),
        sample_id_mismatches=tuple(id_mismatches),
    )
