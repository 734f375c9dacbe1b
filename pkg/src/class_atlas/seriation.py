"""Matrix seriation: complete-linkage clustering, orderings, cuts, permutation.

The goal of this stage is purely presentational-structural: reorder the rows
and columns of a similarity matrix so latent block structure lands on the
diagonal. The workhorse is agglomerative clustering with complete linkage
(inter-cluster distance = max pairwise distance), which cannot produce
height inversions, plus two deterministic conventions that make outputs exact
and testable:

* ties between candidate merges are broken by the lexicographically smallest
  (min id, max id) cluster-id pair;
* at each merge the child subtree containing the smaller minimum leaf index
  is placed on the left when reading off the leaf order.

Cluster ids follow the usual dense scheme: leaves are 0..m-1, the t-th merge
(0-based) creates id m+t, and the final merge creates id 2m-2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    AsymmetricInput,
    ConfigInvalid,
    JSONSchemaError,
    KOutOfRange,
    LeafMismatch,
    NonContiguousPartition,
    NonFiniteValue,
    NonZeroDiagonal,
    SizeMismatch,
    TooFewClasses,
)
from .ingest import Taxonomy, _freeze
from .similarity import SimilarityMatrix


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float


@dataclass(frozen=True)
class Dendrogram:
    """Binary merge tree from agglomerative clustering."""

    n_leaves: int
    merges: tuple[Merge, ...]

    def __post_init__(self):
        m = self.n_leaves
        merges = tuple(self.merges)
        if m < 1:
            raise ConfigInvalid("dendrogram needs at least one leaf")
        if len(merges) != m - 1:
            raise ConfigInvalid(f"{len(merges)} merges for {m} leaves, expected {m - 1}")
        consumed: set[int] = set()
        prev = -np.inf
        for t, mg in enumerate(merges):
            new_id = m + t
            for child in (mg.left, mg.right):
                if not 0 <= child < new_id:
                    raise ConfigInvalid(
                        f"merge {t} references invalid cluster id {child}")
                if child in consumed:
                    raise ConfigInvalid(f"cluster id {child} consumed twice")
                consumed.add(child)
            if mg.left == mg.right:
                raise ConfigInvalid(f"merge {t} joins cluster {mg.left} with itself")
            if mg.height < prev:
                raise ConfigInvalid(
                    f"merge heights decrease at step {t}: {mg.height} < {prev}")
            prev = mg.height
        object.__setattr__(self, "merges", merges)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_leaves": self.n_leaves,
                "merges": [
                    {"left": mg.left, "right": mg.right, "height": mg.height}
                    for mg in self.merges
                ],
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "Dendrogram":
        try:
            obj = json.loads(text)
            merges = tuple(
                Merge(int(mg["left"]), int(mg["right"]), float(mg["height"]))
                for mg in obj["merges"]
            )
            return Dendrogram(n_leaves=int(obj["n_leaves"]), merges=merges)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise JSONSchemaError(f"bad dendrogram JSON: {exc}") from None


@dataclass(frozen=True)
class Ordering:
    """Display permutation: position -> class index."""

    permutation: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(i) for i in self.permutation)
        if sorted(perm) != list(range(len(perm))):
            raise ConfigInvalid("ordering must be a permutation of 0..m-1")
        object.__setattr__(self, "permutation", perm)

    def __len__(self) -> int:
        return len(self.permutation)

    def inverse(self) -> "Ordering":
        inv = [0] * len(self.permutation)
        for pos, cls in enumerate(self.permutation):
            inv[cls] = pos
        return Ordering(tuple(inv))

    def to_json(self) -> str:
        return json.dumps(list(self.permutation))

    @staticmethod
    def from_json(text: str) -> "Ordering":
        try:
            return Ordering(tuple(int(i) for i in json.loads(text)))
        except (TypeError, ValueError, json.JSONDecodeError) as exc:
            raise JSONSchemaError(f"bad ordering JSON: {exc}") from None


@dataclass(frozen=True)
class Partition:
    """Block assignment for every class; ids dense in 0..n_blocks-1."""

    assignment: tuple[int, ...]
    n_blocks: int

    def __post_init__(self):
        assignment = tuple(int(b) for b in self.assignment)
        if not assignment:
            raise ConfigInvalid("partition needs at least one class")
        seen = set(assignment)
        if seen != set(range(self.n_blocks)):
            raise ConfigInvalid(
                f"block ids must be exactly 0..{self.n_blocks - 1}, got {sorted(seen)}")
        object.__setattr__(self, "assignment", assignment)

    @property
    def n_classes(self) -> int:
        return len(self.assignment)

    def members(self, block: int) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.assignment) if b == block)

    def to_json(self) -> str:
        return json.dumps(list(self.assignment))

    @staticmethod
    def from_json(text: str) -> "Partition":
        try:
            assignment = tuple(int(b) for b in json.loads(text))
        except (TypeError, ValueError, json.JSONDecodeError) as exc:
            raise JSONSchemaError(f"bad partition JSON: {exc}") from None
        return Partition(assignment=assignment, n_blocks=max(assignment) + 1)


# ---------------------------------------------------------------------------
# dissimilarity bridge
# ---------------------------------------------------------------------------

def to_dissimilarity(sim: SimilarityMatrix) -> np.ndarray:
    """Elementwise d = 1 - similarity, the monotone bridge into clustering.

    Note that degenerate classes have similarity 0 everywhere including the
    diagonal, so their self-dissimilarity comes out as 1 here; callers feeding
    the result into hclust_complete must decide how to treat such classes
    (the pipeline zeroes the full diagonal, since self-distance is 0 by
    definition).
    """
    return _freeze(1.0 - sim.values)


# ---------------------------------------------------------------------------
# complete-linkage agglomeration
# ---------------------------------------------------------------------------

def _check_dissimilarity(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise SizeMismatch(f"dissimilarity must be square, got {d.shape}")
    if d.shape[0] < 2:
        raise TooFewClasses(f"need at least 2 classes, got {d.shape[0]}")
    if not np.all(np.isfinite(d)):
        raise NonFiniteValue("dissimilarity contains non-finite values")
    if not np.array_equal(d, d.T):
        raise AsymmetricInput("dissimilarity must be exactly symmetric")
    if np.any(np.diagonal(d) != 0.0):
        raise NonZeroDiagonal("dissimilarity diagonal must be exactly zero")
    return d


def hclust_complete(d: np.ndarray) -> Dendrogram:
    """Agglomerative clustering, complete linkage, deterministic tie-break.

    At every step the two active clusters with minimal linkage distance
    D(A, B) = max_{a in A, b in B} d[a][b] are merged at height D(A, B);
    among equal-distance candidates the pair with the lexicographically
    smallest (min id, max id) wins. Distances update by the max rule
    D(A+B, K) = max(D(A, K), D(B, K)), so a nearest-neighbor value array
    gives O(m^2) amortized work: a row's cached minimum only needs rescanning
    when the entry it equals was one of the two just-rewritten columns.
    """
    d = _check_dissimilarity(d)
    m = d.shape[0]
    # Working state, indexed by slot. ids[slot] = current cluster id, -1 dead.
    dist = d.copy()
    np.fill_diagonal(dist, np.inf)
    ids = np.arange(m, dtype=np.int64)
    alive = np.ones(m, dtype=bool)
    mind = dist.min(axis=1)  # per-slot min distance to any other active slot
    merges: list[Merge] = []
    for t in range(m - 1):
        gmin = mind[alive].min()
        best: tuple[int, int, int, int] | None = None  # (idlo, idhi, slot_a, slot_b)
        for i in np.nonzero(alive & (mind == gmin))[0]:
            for j in np.nonzero(dist[i] == gmin)[0]:
                lo, hi = sorted((int(ids[i]), int(ids[j])))
                if best is None or (lo, hi) < best[:2]:
                    best = (lo, hi, int(i), int(j))
        assert best is not None
        lo, hi, a, b = best
        merges.append(Merge(left=lo, right=hi, height=float(gmin)))
        # Fold slot b into slot a with the complete-linkage max rule.
        old_a = dist[:, a].copy()
        old_b = dist[:, b].copy()
        new_row = np.maximum(dist[a], dist[b])
        new_row[a] = np.inf
        new_row[b] = np.inf
        dist[a, :] = new_row
        dist[:, a] = new_row
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        alive[b] = False
        ids[b] = -1
        ids[a] = m + t
        mind[b] = np.inf
        if alive.sum() > 1:
            mind[a] = dist[a][alive].min()
            # Cached minima are stale only where they matched a rewritten
            # column (those entries can only have grown or vanished).
            stale = alive & ((mind == old_a) | (mind == old_b))
            stale[a] = False
            idx = np.nonzero(stale)[0]
            if idx.size:
                mind[idx] = dist[idx].min(axis=1)
    return Dendrogram(n_leaves=m, merges=tuple(merges))


def cophenetic(dend: Dendrogram) -> np.ndarray:
    """Matrix of first-join heights: entry (a, b) = height where a, b unite."""
    m = dend.n_leaves
    members: dict[int, np.ndarray] = {
        i: np.array([i], dtype=np.intp) for i in range(m)
    }
    coph = np.zeros((m, m), dtype=np.float64)
    for t, mg in enumerate(dend.merges):
        left = members.pop(mg.left)
        right = members.pop(mg.right)
        coph[np.ix_(left, right)] = mg.height
        coph[np.ix_(right, left)] = mg.height
        members[m + t] = np.concatenate([left, right])
    return _freeze(coph)


def leaf_order(dend: Dendrogram) -> Ordering:
    """Left-to-right leaf reading; smaller-min-leaf subtree goes left."""
    m = dend.n_leaves
    children: dict[int, tuple[int, int]] = {
        m + t: (mg.left, mg.right) for t, mg in enumerate(dend.merges)
    }
    min_leaf: dict[int, int] = {i: i for i in range(m)}
    for t, mg in enumerate(dend.merges):
        min_leaf[m + t] = min(min_leaf[mg.left], min_leaf[mg.right])
    out: list[int] = []
    stack = [2 * m - 2 if m > 1 else 0]
    while stack:
        node = stack.pop()
        if node < m:
            out.append(node)
            continue
        left, right = children[node]
        if min_leaf[left] > min_leaf[right]:
            left, right = right, left
        stack.append(right)  # popped after left
        stack.append(left)
    return Ordering(tuple(out))


# ---------------------------------------------------------------------------
# taxonomy ordering and permutation
# ---------------------------------------------------------------------------

def taxonomy_order(tax: Taxonomy, class_names) -> Ordering:
    """Order classes by depth-first taxonomy traversal (children in file order)."""
    class_names = tuple(class_names)
    leaves = tax.leaves()
    if set(leaves) != set(class_names) or len(leaves) != len(class_names):
        missing = sorted(set(class_names) - set(leaves))
        extra = sorted(set(leaves) - set(class_names))
        raise LeafMismatch(
            f"taxonomy leaves do not match class names "
            f"(missing {missing}, extra {extra})")
    index = {name: i for i, name in enumerate(class_names)}
    return Ordering(tuple(index[name] for name in leaves))


def permute(matrix: np.ndarray, ordering: Ordering) -> np.ndarray:
    """Symmetric permutation: out[i][j] = in[ord[i]][ord[j]]."""
    matrix = np.asarray(matrix)
    n = len(ordering)
    if matrix.shape != (n, n):
        raise SizeMismatch(
            f"matrix shape {matrix.shape} does not match ordering length {n}")
    perm = np.array(ordering.permutation, dtype=np.intp)
    return _freeze(matrix[np.ix_(perm, perm)])


def permute_names(names, ordering: Ordering) -> tuple[str, ...]:
    names = tuple(names)
    if len(names) != len(ordering):
        raise SizeMismatch(
            f"{len(names)} names do not match ordering length {len(ordering)}")
    return tuple(names[i] for i in ordering.permutation)


# ---------------------------------------------------------------------------
# cuts and spans
# ---------------------------------------------------------------------------

def cut_dendrogram(dend: Dendrogram, k: int) -> Partition:
    """Partition into k blocks by undoing the last k-1 merges.

    Block ids are assigned by order of first appearance along leaf_order, so
    blocks are contiguous index spans in display order.
    """
    m = dend.n_leaves
    if not 1 <= k <= m:
        raise KOutOfRange(f"k must be in [1, {m}], got {k}")
    parent = list(range(2 * m - 1 if m > 1 else 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    # Apply only the first m-k merges; survivors are the k blocks.
    for t, mg in enumerate(dend.merges[: m - k]):
        new_id = m + t
        parent[find(mg.left)] = new_id
        parent[find(mg.right)] = new_id
    roots = [find(i) for i in range(m)]
    block_of_root: dict[int, int] = {}
    for cls in leaf_order(dend).permutation:
        root = roots[cls]
        if root not in block_of_root:
            block_of_root[root] = len(block_of_root)
    assignment = tuple(block_of_root[roots[i]] for i in range(m))
    return Partition(assignment=assignment, n_blocks=k)


def block_spans(part: Partition, ordering: Ordering) -> tuple[tuple[int, int], ...]:
    """Half-open (start, end) span per block in display order; must tile [0, m)."""
    if part.n_classes != len(ordering):
        raise SizeMismatch(
            f"partition over {part.n_classes} classes vs ordering of {len(ordering)}")
    spans: list[tuple[int, int]] = []
    seen: set[int] = set()
    pos = 0
    m = len(ordering)
    while pos < m:
        block = part.assignment[ordering.permutation[pos]]
        if block in seen:
            raise NonContiguousPartition(
                f"block {block} occupies disjoint spans under this ordering")
        seen.add(block)
        end = pos
        while end < m and part.assignment[ordering.permutation[end]] == block:
            end += 1
        spans.append((pos, end))
        pos = end
    return tuple(spans)
