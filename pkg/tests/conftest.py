"""Shared fixtures and independent reference implementations.

The reference implementations here are deliberately written in plain
Python (no vectorisation, no shared helpers from the package) so that
agreement between them and the library is meaningful evidence of
correctness rather than the same code tested against itself.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

import class_atlas as ca


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def make_scores(values, kind="logit", names=None, sample_ids=None):
    values = np.asarray(values, dtype=np.float64)
    m = values.shape[1]
    if names is None:
        names = tuple(f"c{j}" for j in range(m))
    return ca.ScoreMatrix(class_names=tuple(names), values=values, kind=kind,
                          sample_ids=sample_ids)


def make_similarity(values, names=None, measure="pearson",
                    source_kind="logit", degenerate=()):
    values = np.asarray(values, dtype=np.float64)
    m = values.shape[0]
    if names is None:
        names = tuple(f"c{j}" for j in range(m))
    return ca.SimilarityMatrix(class_names=tuple(names), values=values,
                               measure=measure, source_kind=source_kind,
                               degenerate_classes=tuple(degenerate))


def symmetric_similarity(rng, m, degenerate=()):
    """Random exactly-symmetric similarity matrix with unit diagonal."""
    a = rng.uniform(-1.0, 1.0, size=(m, m))
    upper = np.triu(a, 1)
    sym = upper + upper.T
    np.fill_diagonal(sym, 1.0)
    for j in degenerate:
        sym[j, :] = 0.0
        sym[:, j] = 0.0
    return make_similarity(sym, degenerate=degenerate)


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------------------
# Reference: per-pair two-pass Pearson correlation
# ---------------------------------------------------------------------------

def pearson_reference(columns_a, columns_b):
    """Two-pass Pearson correlation of two sequences (plain Python)."""
    n = len(columns_a)
    mean_a = sum(columns_a) / n
    mean_b = sum(columns_b) / n
    cov = var_a = var_b = 0.0
    for x, y in zip(columns_a, columns_b):
        cov += (x - mean_a) * (y - mean_b)
        var_a += (x - mean_a) ** 2
        var_b += (y - mean_b) ** 2
    return cov / math.sqrt(var_a * var_b)


def similarity_reference(values):
    """Full similarity matrix via the per-pair two-pass rule.

    Constant columns give zero rows/columns (including the diagonal),
    mirroring the degenerate-class contract.
    """
    values = np.asarray(values, dtype=np.float64)
    n, m = values.shape
    degenerate = [j for j in range(m)
                  if values[:, j].min() == values[:, j].max()]
    out = np.zeros((m, m))
    for a in range(m):
        if a in degenerate:
            continue
        out[a, a] = 1.0
        for b in range(a + 1, m):
            if b in degenerate:
                continue
            r = pearson_reference(list(values[:, a]), list(values[:, b]))
            r = min(1.0, max(-1.0, r))
            out[a, b] = out[b, a] = r
    return out, degenerate


def rank_reference(row):
    """Average-tie ascending ranks of one row (plain Python)."""
    order = sorted(range(len(row)), key=lambda j: row[j])
    ranks = [0.0] * len(row)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and row[order[j + 1]] == row[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1.0
        for p in range(i, j + 1):
            ranks[order[p]] = avg
        i = j + 1
    return ranks


# ---------------------------------------------------------------------------
# Reference: brute-force complete-linkage agglomeration
# ---------------------------------------------------------------------------

def hclust_reference(d):
    """O(m^3) complete linkage with the documented tie-break.

    Clusters carry ids (leaves 0..m-1, merge t creates id m+t); at each
    step the minimum inter-cluster distance is found by scanning every
    live pair, preferring the lexicographically smallest (min id, max id)
    pair among ties.  Returns a list of (left_id, right_id, height).
    """
    d = np.asarray(d, dtype=np.float64)
    m = d.shape[0]
    clusters = {i: [i] for i in range(m)}

    def linkage(a, b):
        return max(float(d[i, j]) for i in clusters[a] for j in clusters[b])

    merges = []
    next_id = m
    for _ in range(m - 1):
        best = None
        for a in sorted(clusters):
            for b in sorted(clusters):
                if a >= b:
                    continue
                h = linkage(a, b)
                key = (h, min(a, b), max(a, b))
                if best is None or key < best:
                    best = key
        h, a, b = best
        merges.append((a, b, h))
        clusters[next_id] = clusters.pop(a) + clusters.pop(b)
        next_id += 1
    return merges


def random_dissimilarity(rng, m):
    """Random symmetric zero-diagonal matrix with distinct off-diag values."""
    k = m * (m - 1) // 2
    vals = rng.permutation(k) + rng.uniform(0.1, 0.9, size=k)
    d = np.zeros((m, m))
    iu = np.triu_indices(m, 1)
    d[iu] = vals
    return d + d.T
