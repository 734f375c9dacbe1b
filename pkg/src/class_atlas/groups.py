"""Group structure beyond the strict hierarchy: fuzzy clustering + detectors.

A hard hierarchical cut can hide three things the similarity matrix still
shows. This module recovers them:

* **recovered groups** -- soft clusters from fuzzy c-means run on the rows of
  the similarity matrix, thresholded into (possibly overlapping) member sets;
* **split pairs** -- pairs of blocks whose mean inter-block similarity is
  unusually high, i.e. one coherent group that the cut broke in two;
* **failed groups** -- recovered groups whose members are scattered across
  many blocks, i.e. structure the hierarchy missed entirely;
* **star classes** -- classes that co-occur with an unusually broad set of
  other classes in multi-labeled ground truth.

Everything is deterministic: fuzzy c-means initializes from the package's
own seeded generator, and all detectors emit groups in a fixed order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import (
    BadClusterCount,
    BadFuzzifier,
    ConfigInvalid,
    InvariantError,
    JSONSchemaError,
    SingleBlock,
    WrongKind,
)
from .ingest import _freeze
from .seriation import Partition
from .similarity import CountMatrix, SimilarityMatrix

GROUP_KINDS = ("hierarchical", "recovered", "split_pair", "star")

# An FCM iteration can raise the objective only through float rounding; this
# is the largest relative uptick treated as noise rather than a logic bug.
OBJECTIVE_SLACK = 1e-10


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Memberships:
    """Soft assignment of m classes to c clusters; rows sum to 1.

    ``objective_trace`` records the fuzzy objective J after every completed
    iteration so callers (and tests) can observe the descent.
    """

    weights: np.ndarray
    objective_trace: tuple[float, ...] = ()

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ConfigInvalid(f"weights must be 2-D, got shape {weights.shape}")
        if weights.size:
            if not np.all(np.isfinite(weights)):
                raise ConfigInvalid("membership weights must be finite")
            if weights.min() < 0.0 or weights.max() > 1.0:
                raise ConfigInvalid("membership weights must lie in [0, 1]")
            sums = weights.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > 1e-9:
                raise ConfigInvalid("membership rows must sum to 1 within 1e-9")
        object.__setattr__(self, "weights", _freeze(weights))
        object.__setattr__(
            self, "objective_trace", tuple(float(j) for j in self.objective_trace))

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Group:
    member_indices: frozenset[int]
    kind: str
    score: float
    provenance: str = ""

    def __post_init__(self):
        if not self.member_indices:
            raise ConfigInvalid("groups must have at least one member")
        if self.kind not in GROUP_KINDS:
            raise ConfigInvalid(f"unknown group kind {self.kind!r}")
        object.__setattr__(
            self, "member_indices", frozenset(int(i) for i in self.member_indices))


@dataclass(frozen=True)
class GroupSet:
    """A list of class groups; a class may appear in several (overlap ok)."""

    groups: tuple[Group, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def to_json(self, class_names) -> str:
        class_names = tuple(class_names)
        return json.dumps(
            [
                {
                    "kind": g.kind,
                    "members": [class_names[i] for i in sorted(g.member_indices)],
                    "score": g.score,
                    "provenance": g.provenance,
                }
                for g in self.groups
            ],
            indent=2,
        )

    @staticmethod
    def from_json(text: str, class_names) -> "GroupSet":
        index = {name: i for i, name in enumerate(tuple(class_names))}
        try:
            raw = json.loads(text)
            groups = []
            for entry in raw:
                members = frozenset(index[name] for name in entry["members"])
                groups.append(Group(
                    member_indices=members,
                    kind=entry["kind"],
                    score=float(entry["score"]),
                    provenance=str(entry.get("provenance", "")),
                ))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise JSONSchemaError(f"bad group JSON: {exc}") from None
        return GroupSet(groups=tuple(groups))


# ---------------------------------------------------------------------------
# fuzzy c-means
# ---------------------------------------------------------------------------

def fuzzy_cmeans(
    features: np.ndarray,
    c: int,
    fuzzifier: float = 2.0,
    tol: float = 1e-7,
    max_iter: int = 300,
    seed: int = 0,
) -> Memberships:
    """Standard fuzzy c-means with Euclidean distance, fully deterministic.

    Alternates centroid and weight updates::

        v_k = sum_i w_ik^f x_i / sum_i w_ik^f
        w_ik = 1 / sum_l (d_ik / d_il)^(2/(f-1))      d_ik = ||x_i - v_k||

    A point exactly coincident with one or more centroids gets weight 1 on
    the lowest-index coincident centroid. Initial weights are seeded uniform
    draws, row-normalized. Stops when max |delta w| < tol or after max_iter
    iterations. The objective J = sum_ik w_ik^f d_ik^2 is recorded after each
    iteration and verified non-increasing (up to float-rounding slack).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigInvalid(f"features must be a non-empty 2-D array, got {x.shape}")
    n = x.shape[0]
    if not 1 <= c <= n:
        raise BadClusterCount(f"cluster count must be in [1, {n}], got {c}")
    if not fuzzifier > 1.0:
        raise BadFuzzifier(f"fuzzifier must be > 1, got {fuzzifier}")
    if tol <= 0 or max_iter < 1:
        raise ConfigInvalid("tol must be > 0 and max_iter >= 1")

    draws = rng.uniforms(seed, n * c).reshape(n, c)
    sums = draws.sum(axis=1, keepdims=True)
    if np.any(sums == 0.0):
        # Measure-zero event (every draw in a row exactly 0): fall back to
        # uniform weights for those rows instead of dividing by zero.
        rows = np.nonzero(sums[:, 0] == 0.0)[0]
        draws[rows] = 1.0
        sums = draws.sum(axis=1, keepdims=True)
    weights = draws / sums
    exponent = 2.0 / (fuzzifier - 1.0)
    trace: list[float] = []
    for _ in range(max_iter):
        wf = weights ** fuzzifier
        centroids = (wf.T @ x) / wf.sum(axis=0)[:, None]
        diff = x[:, None, :] - centroids[None, :, :]
        dist_sq = np.einsum("ikd,ikd->ik", diff, diff)
        dist = np.sqrt(dist_sq)
        new_weights = np.zeros_like(weights)
        coincident = dist == 0.0
        hit_rows = coincident.any(axis=1)
        if hit_rows.any():
            first_hit = np.argmax(coincident[hit_rows], axis=1)
            new_weights[np.nonzero(hit_rows)[0], first_hit] = 1.0
        free = ~hit_rows
        if free.any():
            inv = dist[free] ** (-exponent)
            new_weights[free] = inv / inv.sum(axis=1, keepdims=True)
        delta = float(np.max(np.abs(new_weights - weights)))
        weights = new_weights
        objective = float(((weights ** fuzzifier) * dist_sq).sum())
        if trace and objective > trace[-1] * (1.0 + OBJECTIVE_SLACK) + 1e-15:
            raise InvariantError(
                f"fuzzy objective increased: {trace[-1]!r} -> {objective!r}")
        trace.append(objective)
        if delta < tol:
            break
    return Memberships(weights=weights, objective_trace=tuple(trace))


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------

def recovered_groups(mem: Memberships, threshold: float = 0.2) -> GroupSet:
    """One group per fuzzy cluster: members with weight >= threshold.

    The default threshold 0.2 sits below the uniform weight 1/c for c <= 5,
    so overlapping membership is representable. Empty clusters are omitted;
    score is the mean member weight.
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigInvalid(f"threshold must be in (0, 1], got {threshold}")
    groups: list[Group] = []
    for k in range(mem.n_clusters):
        col = mem.weights[:, k]
        members = np.nonzero(col >= threshold)[0]
        if members.size == 0:
            continue
        groups.append(Group(
            member_indices=frozenset(int(i) for i in members),
            kind="recovered",
            score=float(col[members].mean()),
            provenance=f"fuzzy cluster {k} of {mem.n_clusters}, "
                       f"membership >= {threshold:g}",
        ))
    return GroupSet(groups=tuple(groups))


def split_groups(
    sim: SimilarityMatrix, part: Partition, quantile: float = 0.95,
) -> GroupSet:
    """Block pairs whose mean inter-block similarity is unusually high.

    For every unordered block pair the mean similarity over the rectangle
    A x B is computed; a pair is flagged when its mean sits strictly above
    the empirical quantile, i.e. when the fraction of inter-block means
    strictly below it is at least ``quantile``. All-equal means therefore
    flag nothing, and a two-block partition (a single candidate) never
    clears a positive quantile.
    """
    if not 0.0 < quantile < 1.0:
        raise ConfigInvalid(f"quantile must be in (0, 1), got {quantile}")
    if part.n_blocks < 2:
        raise SingleBlock("need at least 2 blocks to compare")
    if part.n_classes != sim.n_classes:
        raise ConfigInvalid(
            f"partition over {part.n_classes} classes vs {sim.n_classes} similarities")
    members = [np.array(part.members(b), dtype=np.intp) for b in range(part.n_blocks)]
    pairs: list[tuple[int, int]] = []
    means: list[float] = []
    for a in range(part.n_blocks):
        for b in range(a + 1, part.n_blocks):
            pairs.append((a, b))
            means.append(float(sim.values[np.ix_(members[a], members[b])].mean()))
    arr = np.array(means)
    groups: list[Group] = []
    for (a, b), inter in zip(pairs, means):
        if np.count_nonzero(arr < inter) / arr.size >= quantile:
            groups.append(Group(
                member_indices=frozenset(
                    int(i) for i in np.concatenate([members[a], members[b]])),
                kind="split_pair",
                score=inter,
                provenance=f"blocks {a}+{b}, mean inter-similarity {inter:.6g} "
                           f"above the {quantile:g} quantile",
            ))
    return GroupSet(groups=tuple(groups))


def failed_groups(
    groups: GroupSet, part: Partition, dispersion_threshold: float = 0.5,
) -> GroupSet:
    """Recovered groups the hierarchy scattered across many blocks.

    dispersion(g) = (distinct blocks occupied - 1) / (|g| - 1), which is 0
    when the group sits inside one block and 1 when every member is alone in
    its own block; groups at or above the threshold are returned with their
    provenance re-tagged.
    """
    if not 0.0 < dispersion_threshold <= 1.0:
        raise ConfigInvalid(
            f"dispersion threshold must be in (0, 1], got {dispersion_threshold}")
    flagged: list[Group] = []
    for g in groups:
        if g.kind != "recovered":
            continue
        size = len(g.member_indices)
        if size < 2:
            dispersion = 0.0
        else:
            blocks = {part.assignment[i] for i in g.member_indices}
            dispersion = (len(blocks) - 1) / (size - 1)
        if dispersion >= dispersion_threshold:
            flagged.append(Group(
                member_indices=g.member_indices,
                kind="recovered",
                score=g.score,
                provenance=f"failed (dispersion {dispersion:.4f}; {g.provenance})",
            ))
    return GroupSet(groups=tuple(flagged))


def star_classes(
    counts: CountMatrix, breadth_threshold: float = 0.5,
) -> GroupSet:
    """Classes co-occurring with an unusually broad share of other classes.

    breadth(j) = fraction of the other m-1 classes k with counts[j][k] > 0;
    classes at or above the threshold become singleton star groups, sorted by
    breadth descending (class index breaks ties).
    """
    if counts.kind != "cooccurrence":
        raise WrongKind(
            f"star detection needs co-occurrence counts, got {counts.kind!r}")
    if not 0.0 < breadth_threshold <= 1.0:
        raise ConfigInvalid(
            f"breadth threshold must be in (0, 1], got {breadth_threshold}")
    m = counts.n_classes
    found: list[Group] = []
    if m > 1:
        offdiag = counts.counts.copy()
        np.fill_diagonal(offdiag, 0)
        breadth = (offdiag > 0).sum(axis=1) / (m - 1)
        for j in np.nonzero(breadth >= breadth_threshold)[0]:
            found.append(Group(
                member_indices=frozenset([int(j)]),
                kind="star",
                score=float(breadth[j]),
                provenance=f"co-occurs with {int((offdiag[j] > 0).sum())} "
                           f"of {m - 1} other classes",
            ))
    found.sort(key=lambda g: (-g.score, min(g.member_indices)))
    return GroupSet(groups=tuple(found))


def planted_overlap(
    block_size: int = 10,
    overlap: int = 6,
    within: float = 0.8,
    bridge: float = 0.6,
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Synthetic similarity with two blocks and a known cross-cutting set.

    Two equal diagonal blocks of within-block similarity ``within`` sit on a
    zero background. A planted set S straddles the block boundary (half its
    members drawn from each block) and is similar to *both* whole blocks:
    every pair touching S is raised to at least ``bridge``. Unit diagonal.

    Returns the matrix and S's indices — the ground truth an overlapping
    clustering should recover as a single group whose thresholded membership
    cuts across the two hard blocks.
    """
    if block_size < 2:
        raise ConfigInvalid(f"block_size must be >= 2, got {block_size}")
    if not 1 <= overlap <= block_size:
        raise ConfigInvalid(
            f"overlap must be in [1, {block_size}], got {overlap}")
    if not 0.0 < bridge <= within <= 1.0:
        raise ConfigInvalid(
            f"need 0 < bridge <= within <= 1, got bridge={bridge} "
            f"within={within}")
    m = 2 * block_size
    left = overlap // 2
    members = tuple(range(block_size - left, block_size - left + overlap))
    values = np.zeros((m, m))
    values[:block_size, :block_size] = within
    values[block_size:, block_size:] = within
    for a in members:
        values[a, :] = np.maximum(values[a, :], bridge)
        values[:, a] = np.maximum(values[:, a], bridge)
    np.fill_diagonal(values, 1.0)
    return values, members
