"""Synthetic planted-hierarchy score generator.

Builds a complete b-ary tree of depth L whose leaves are the classes, then
emits logit scores in which relatedness is controlled exactly: for a sample
whose true class is c, the logit of class j is

    alpha * depth(LCA(c, j)) / L  +  beta * [j == c]  +  Normal(0, sigma^2)

where depth(LCA) is the depth of the lowest common ancestor of the two
leaves (the length of their common path prefix; L for j == c). Because the
planted tree and every per-level partition are returned alongside the
scores, downstream stages can be scored against ground truth instead of
against eyeballing.

Noise comes from the package's own counter-based generator, so a fixed seed
gives byte-identical scores on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigInvalid
from .ingest import LabelData, ScoreMatrix, TaxNode, Taxonomy
from .seriation import Partition

MAX_CLASSES = 100_000


@dataclass(frozen=True)
class SynthConfig:
    depth: int = 2
    branching: int = 2
    samples_per_class: int = 40
    alpha: float = 4.0
    beta: float = 2.0
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigInvalid(f"depth must be >= 1, got {self.depth}")
        if self.branching < 2:
            raise ConfigInvalid(f"branching must be >= 2, got {self.branching}")
        if self.samples_per_class < 1:
            raise ConfigInvalid(
                f"samples_per_class must be >= 1, got {self.samples_per_class}")
        for name in ("alpha", "beta", "sigma"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigInvalid(f"{name} must be finite")
        if self.sigma < 0:
            raise ConfigInvalid(f"sigma must be >= 0, got {self.sigma}")
        if self.branching ** self.depth > MAX_CLASSES:
            raise ConfigInvalid(
                f"{self.branching}^{self.depth} classes exceeds the "
                f"{MAX_CLASSES} class budget")

    @property
    def n_classes(self) -> int:
        return self.branching ** self.depth

    @property
    def n_samples(self) -> int:
        return self.n_classes * self.samples_per_class


def _leaf_digits(index: int, depth: int, branching: int) -> tuple[int, ...]:
    digits = []
    for _ in range(depth):
        digits.append(index % branching)
        index //= branching
    return tuple(reversed(digits))


def _class_name(index: int, depth: int, branching: int) -> str:
    return "c" + "_".join(str(d) for d in _leaf_digits(index, depth, branching))


def _build_taxonomy(cfg: SynthConfig) -> Taxonomy:
    def build(prefix: tuple[int, ...]) -> TaxNode:
        if len(prefix) == cfg.depth:
            return TaxNode(name="c" + "_".join(str(d) for d in prefix))
        name = "root" if not prefix else "n" + "_".join(str(d) for d in prefix)
        return TaxNode(
            name=name,
            children=tuple(build(prefix + (d,)) for d in range(cfg.branching)),
        )

    return Taxonomy(root=build(()))


def planted_partitions(cfg: SynthConfig) -> tuple[Partition, ...]:
    """Ground-truth partition at every tree level 0..L.

    Level 0 is the single all-classes block; level L is all singletons; level
    k groups leaves by their depth-k ancestor (classes sharing the first k
    path digits).
    """
    m = cfg.n_classes
    parts = []
    for level in range(cfg.depth + 1):
        width = cfg.branching ** (cfg.depth - level)
        assignment = tuple(i // width for i in range(m))
        parts.append(Partition(assignment=assignment, n_blocks=cfg.branching ** level))
    return tuple(parts)


def synth_labels(cfg: SynthConfig) -> LabelData:
    """Single-label ground truth matching synth_scores' sample layout."""
    names = [_class_name(c, cfg.depth, cfg.branching) for c in range(cfg.n_classes)]
    sample_ids = []
    labels = []
    for c in range(cfg.n_classes):
        for r in range(cfg.samples_per_class):
            sample_ids.append(f"s{c}_{r}")
            labels.append(frozenset([names[c]]))
    return LabelData(sample_ids=tuple(sample_ids), labels=tuple(labels))


def synth_scores(cfg: SynthConfig) -> tuple[ScoreMatrix, Taxonomy, tuple[Partition, ...]]:
    """Generate logit scores with a planted hierarchy.

    Samples are laid out class-major: the first samples_per_class rows belong
    to class 0, and so on. Returns the scores, the planted taxonomy, and the
    true partition at every level of the tree.
    """
    m = cfg.n_classes
    L = cfg.depth
    b = cfg.branching
    n = cfg.n_samples

    # lca_depth[c, j] = common prefix length of the two leaf paths.
    digits = np.array(
        [_leaf_digits(i, L, b) for i in range(m)], dtype=np.int64)  # (m, L)
    same = digits[:, None, :] == digits[None, :, :]                  # (m, m, L)
    lca_depth = same.cumprod(axis=2).sum(axis=2)                     # (m, m)

    base = cfg.alpha * lca_depth.astype(np.float64) / L
    base[np.diag_indices(m)] += cfg.beta
    logits = np.repeat(base, cfg.samples_per_class, axis=0)          # (n, m)
    if cfg.sigma > 0:
        noise = rng.normals(cfg.seed, n * m).reshape(n, m)
        logits = logits + cfg.sigma * noise

    names = tuple(_class_name(c, L, b) for c in range(m))
    sample_ids = tuple(
        f"s{c}_{r}" for c in range(m) for r in range(cfg.samples_per_class))
    scores = ScoreMatrix(
        class_names=names, values=logits, kind="logit", sample_ids=sample_ids)
    return scores, _build_taxonomy(cfg), planted_partitions(cfg)
