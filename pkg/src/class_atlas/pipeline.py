"""Pipeline orchestration: staged artifact conventions shared with the CLI.

Each stage is a function that takes validated in-memory objects, writes its
artifacts into an output directory under fixed names, and returns the
objects the next stage needs. The CLI subcommands call exactly these
functions, and ``run_pipeline`` is nothing but the staged calls in sequence,
so a full pipeline run and an equivalent chain of subcommand invocations
produce byte-identical files.

Artifact names (within the output directory):

    validation.json            alignment report
    scores.bsm                 synthetic scores (synth stage only)
    labels.csv, taxonomy.json  synthetic companions (synth stage only)
    planted_level_<k>.json     synthetic ground-truth partitions
    scores_transformed.bsm     transformed scores (when a transform ran)
    similarity.bsm             the class-similarity matrix
    dendrogram.json            merge tree (hclust ordering only)
    ordering.json              display permutation
    partition.json             block assignment from the dendrogram cut
    memberships.bsm            fuzzy membership weights
    groups.json                all detected groups
    cooccurrence.bsm           label co-occurrence counts (labels given)
    confusion.bsm              confusion counts (confusion stage only)
    stats.json, histogram.svg  off-diagonal value distribution
    heatmap.svg [heatmap.png]  seriated similarity heatmap
    dendrogram.svg             tree strip (hclust ordering only)
    report.html                self-contained report
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, InputError
from .groups import (
    GroupSet,
    Memberships,
    failed_groups,
    fuzzy_cmeans,
    recovered_groups,
    split_groups,
    star_classes,
)
from .ingest import (
    LabelData,
    ScoreMatrix,
    Taxonomy,
    ValidationReport,
    parse_labels,
    parse_scores_binary,
    parse_scores_csv,
    parse_taxonomy,
    read_bsm1,
    validate_alignment,
    write_bsm1,
    write_labels_csv,
    write_scores_binary,
    write_taxonomy_json,
    _header_counts,
    _header_names,
    _payload_array,
)
from .render import (
    RenderSpec,
    render_dendrogram,
    render_heatmap,
    render_histogram,
    render_report,
)
from .seriation import (
    Dendrogram,
    Ordering,
    Partition,
    block_spans,
    cut_dendrogram,
    hclust_complete,
    leaf_order,
    taxonomy_order,
    to_dissimilarity,
)
from .similarity import (
    CountMatrix,
    SimilarityMatrix,
    confusion_matrix,
    cooccurrence_matrix,
    distribution_stats,
    offdiagonal_values,
    parse_counts_binary,
    parse_similarity_binary,
    pearson_similarity,
    softmax_rows,
    spearman_similarity,
    rank_rows,
    write_counts_binary,
    write_similarity_binary,
)
from .synth import SynthConfig, synth_labels, synth_scores

TRANSFORMS = ("none", "softmax", "rank")
ORDERING_METHODS = ("hclust", "taxonomy")


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def read_file(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def write_file(path: str, data: bytes) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def _out(outdir: str, name: str) -> str:
    return os.path.join(outdir, name)


def load_scores(path: str, csv_kind: str = "logit") -> ScoreMatrix:
    """Load scores from CSV (kind supplied by the caller) or BSM1 (self-describing)."""
    data = read_file(path)
    if path.endswith(".csv"):
        return parse_scores_csv(data, kind=csv_kind)
    return parse_scores_binary(data)


def load_labels(path: str) -> LabelData:
    return parse_labels(read_file(path))


def load_taxonomy(path: str) -> Taxonomy:
    return parse_taxonomy(read_file(path))


def load_similarity(path: str) -> SimilarityMatrix:
    return parse_similarity_binary(read_file(path))


def load_counts(path: str) -> CountMatrix:
    return parse_counts_binary(read_file(path))


def write_memberships(mem: Memberships, class_names, path: str) -> None:
    header = {
        "magic": "BSM1",
        "n": mem.n_classes,
        "m": mem.n_clusters,
        "dtype": "f64",
        "kind": "memberships",
        "classes": list(class_names),
    }
    write_file(path, write_bsm1(header, mem.weights.astype("<f8")))


def load_memberships(path: str) -> tuple[Memberships, tuple[str, ...]]:
    header, payload = read_bsm1(read_file(path))
    if header.get("kind") != "memberships":
        raise ConfigInvalid(
            f"expected a memberships container, got {header.get('kind')!r}")
    n, c = _header_counts(header)
    names = _header_names(header, "classes", n)
    weights = _payload_array(header, payload, n, c).astype(np.float64)
    return Memberships(weights=weights), names


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_validate(
    scores: ScoreMatrix,
    labels: LabelData | None,
    taxonomy: Taxonomy | None,
    outdir: str,
) -> ValidationReport:
    report = validate_alignment(scores, labels, taxonomy)
    write_file(_out(outdir, "validation.json"),
               (report.to_json() + "\n").encode("utf-8"))
    return report


def apply_transform(scores: ScoreMatrix, transform: str) -> ScoreMatrix:
    if transform == "none":
        return scores
    if transform == "softmax":
        return softmax_rows(scores)
    if transform == "rank":
        return rank_rows(scores)
    raise ConfigInvalid(f"unknown transform {transform!r}")


def stage_sim(
    scores: ScoreMatrix, measure: str, transform: str, outdir: str,
) -> SimilarityMatrix:
    transformed = apply_transform(scores, transform)
    if transform != "none":
        write_file(_out(outdir, "scores_transformed.bsm"),
                   write_scores_binary(transformed))
    if measure == "pearson":
        sim = pearson_similarity(transformed)
    elif measure == "spearman":
        sim = spearman_similarity(transformed)
    else:
        raise ConfigInvalid(f"unknown measure {measure!r}")
    write_file(_out(outdir, "similarity.bsm"), write_similarity_binary(sim))
    return sim


def clustering_input(sim: SimilarityMatrix) -> np.ndarray:
    """Dissimilarity fed to clustering: 1 - sim with the diagonal zeroed.

    Degenerate classes have similarity 0 to themselves, which would put a 1
    on the dissimilarity diagonal; self-distance is zero by definition, so
    the diagonal is cleared wholesale before clustering.
    """
    d = np.array(to_dissimilarity(sim))
    np.fill_diagonal(d, 0.0)
    return d


def stage_order(
    sim: SimilarityMatrix,
    method: str,
    taxonomy: Taxonomy | None,
    outdir: str,
) -> tuple[Dendrogram | None, Ordering]:
    if method == "hclust":
        dend = hclust_complete(clustering_input(sim))
        ordering = leaf_order(dend)
        write_file(_out(outdir, "dendrogram.json"),
                   (dend.to_json() + "\n").encode("utf-8"))
    elif method == "taxonomy":
        if taxonomy is None:
            raise ConfigInvalid("ordering method 'taxonomy' needs a taxonomy file")
        dend = None
        ordering = taxonomy_order(taxonomy, sim.class_names)
    else:
        raise ConfigInvalid(f"unknown ordering method {method!r}")
    write_file(_out(outdir, "ordering.json"),
               (ordering.to_json() + "\n").encode("utf-8"))
    return dend, ordering


def stage_cut(dend: Dendrogram, k: int, outdir: str) -> Partition:
    part = cut_dendrogram(dend, k)
    write_file(_out(outdir, "partition.json"),
               (part.to_json() + "\n").encode("utf-8"))
    return part


@dataclass(frozen=True)
class GroupParams:
    c: int | None = None          # fuzzy cluster count; None = number of blocks
    fuzzifier: float = 2.0
    threshold: float = 0.2        # membership threshold for recovered groups
    quantile: float = 0.95        # split-pair quantile
    dispersion: float = 0.5       # failed-group dispersion threshold
    star_breadth: float = 0.5     # star-class breadth threshold
    tol: float = 1e-7
    max_iter: int = 300
    seed: int = 0


def stage_groups(
    sim: SimilarityMatrix,
    part: Partition,
    params: GroupParams,
    outdir: str,
    counts: CountMatrix | None = None,
) -> tuple[Memberships, GroupSet]:
    c = params.c if params.c is not None else part.n_blocks
    mem = fuzzy_cmeans(
        sim.values, c=c, fuzzifier=params.fuzzifier,
        tol=params.tol, max_iter=params.max_iter, seed=params.seed)
    write_memberships(mem, sim.class_names, _out(outdir, "memberships.bsm"))
    recovered = recovered_groups(mem, threshold=params.threshold)
    failed = failed_groups(recovered, part, dispersion_threshold=params.dispersion)
    split = (split_groups(sim, part, quantile=params.quantile)
             if part.n_blocks >= 2 else GroupSet(groups=()))
    stars = (star_classes(counts, breadth_threshold=params.star_breadth)
             if counts is not None else GroupSet(groups=()))
    combined = GroupSet(groups=tuple(recovered) + tuple(failed)
                        + tuple(split) + tuple(stars))
    write_file(_out(outdir, "groups.json"),
               (combined.to_json(sim.class_names) + "\n").encode("utf-8"))
    return mem, combined


def stage_stats(sim: SimilarityMatrix, n_bins: int, outdir: str):
    stats = distribution_stats(offdiagonal_values(sim), n_bins=n_bins)
    write_file(_out(outdir, "stats.json"),
               (stats.to_json() + "\n").encode("utf-8"))
    write_file(_out(outdir, "histogram.svg"),
               render_histogram(stats, RenderSpec()))
    return stats


def _render_spec(
    sim: SimilarityMatrix,
    ordering: Ordering,
    part: Partition | None,
    clip: tuple[float, float],
    colormap: str,
    cell_px: int,
    fmt: str,
) -> RenderSpec:
    spans: tuple = ()
    if part is not None:
        spans = block_spans(part, ordering)
    flags = tuple(
        i in sim.degenerate_classes for i in range(sim.n_classes))
    return RenderSpec(clip=clip, colormap=colormap, cell_px=cell_px,
                      spans=spans, flags=flags, format=fmt)


def stage_render(
    sim: SimilarityMatrix,
    ordering: Ordering,
    part: Partition | None,
    groups: GroupSet | None,
    dend: Dendrogram | None,
    outdir: str,
    clip: tuple[float, float] = (-1.0, 1.0),
    colormap: str = "diverging",
    cell_px: int = 4,
    fmt: str = "svg",
) -> None:
    spec = _render_spec(sim, ordering, part, clip, colormap, cell_px, "svg")
    write_file(_out(outdir, "heatmap.svg"),
               render_heatmap(sim.values, ordering, spec, groups))
    if fmt == "png":
        png_spec = _render_spec(sim, ordering, part, clip, colormap, cell_px, "png")
        write_file(_out(outdir, "heatmap.png"),
                   render_heatmap(sim.values, ordering, png_spec, groups))
    if dend is not None and ordering.permutation == leaf_order(dend).permutation:
        strip_spec = RenderSpec(clip=clip, colormap=colormap,
                                cell_px=cell_px, format="svg")
        write_file(_out(outdir, "dendrogram.svg"),
                   render_dendrogram(dend, ordering, strip_spec))


def stage_report(outdir: str, ordering_method: str = "hclust") -> None:
    """Assemble report.html from whatever artifacts exist in the directory.

    Metadata is derived from the artifacts themselves (plus the stated
    ordering method), so a staged invocation reproduces the pipeline's
    report byte-for-byte.
    """
    def maybe(name: str) -> bytes | None:
        path = _out(outdir, name)
        return read_file(path) if os.path.exists(path) else None

    sim_bytes = maybe("similarity.bsm")
    if sim_bytes is None:
        raise InputError(f"no similarity.bsm in {outdir}; run the sim stage first")
    sim = parse_similarity_binary(sim_bytes)
    heatmap = maybe("heatmap.svg")
    dendro = maybe("dendrogram.svg")
    histogram = maybe("histogram.svg")
    groups_text = maybe("groups.json")
    partition_text = maybe("partition.json")

    metadata = {
        "measure": sim.measure,
        "source_kind": sim.source_kind,
        "n_classes": sim.n_classes,
        "n_degenerate": len(sim.degenerate_classes),
        "ordering_method": ordering_method,
    }
    if partition_text is not None:
        metadata["n_blocks"] = Partition.from_json(
            partition_text.decode("utf-8")).n_blocks

    heatmaps = [("Seriated similarity heatmap", heatmap)] if heatmap else []
    dendrograms = [("Complete-linkage dendrogram", dendro)] if dendro else []
    histograms = [("Off-diagonal similarity distribution", histogram)] if histogram else []
    tables = []
    if groups_text is not None:
        groupset = GroupSet.from_json(groups_text.decode("utf-8"), sim.class_names)
        if len(groupset):
            tables = [("Detected groups", groupset, sim.class_names)]
    write_file(_out(outdir, "report.html"), render_report(
        heatmaps=heatmaps, dendrograms=dendrograms, histograms=histograms,
        group_tables=tables, metadata=metadata))


def stage_synth(cfg: SynthConfig, outdir: str) -> ScoreMatrix:
    scores, taxonomy, planted = synth_scores(cfg)
    write_file(_out(outdir, "scores.bsm"), write_scores_binary(scores))
    write_file(_out(outdir, "taxonomy.json"), write_taxonomy_json(taxonomy))
    write_file(_out(outdir, "labels.csv"), write_labels_csv(synth_labels(cfg)))
    for level, part in enumerate(planted):
        write_file(_out(outdir, f"planted_level_{level}.json"),
                   (part.to_json() + "\n").encode("utf-8"))
    return scores


def stage_confusion(scores: ScoreMatrix, labels: LabelData, outdir: str) -> CountMatrix:
    cm = confusion_matrix(scores, labels)
    write_file(_out(outdir, "confusion.bsm"), write_counts_binary(cm))
    return cm


def stage_cooccur(labels: LabelData, class_names, outdir: str) -> CountMatrix:
    cm = cooccurrence_matrix(labels, class_names)
    write_file(_out(outdir, "cooccurrence.bsm"), write_counts_binary(cm))
    return cm


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    scores_path: str
    labels_path: str | None = None
    taxonomy_path: str | None = None
    csv_kind: str = "logit"
    measure: str = "pearson"
    transform: str = "none"
    ordering: str = "hclust"
    k: int = 2
    group_params: GroupParams = field(default_factory=GroupParams)
    n_bins: int = 32
    clip: tuple[float, float] = (-1.0, 1.0)
    colormap: str = "diverging"
    cell_px: int = 4
    fmt: str = "svg"
    outdir: str = "."

    def __post_init__(self):
        if self.measure not in ("pearson", "spearman"):
            raise ConfigInvalid(f"unknown measure {self.measure!r}")
        if self.transform not in TRANSFORMS:
            raise ConfigInvalid(f"unknown transform {self.transform!r}")
        if self.ordering not in ORDERING_METHODS:
            raise ConfigInvalid(f"unknown ordering method {self.ordering!r}")
        if self.fmt not in ("svg", "png"):
            raise ConfigInvalid(f"unknown render format {self.fmt!r}")
        if self.k < 1:
            raise ConfigInvalid(f"cut k must be >= 1, got {self.k}")
        if self.n_bins < 1:
            raise ConfigInvalid(f"n_bins must be >= 1, got {self.n_bins}")


def run_pipeline(cfg: PipelineConfig) -> list[str]:
    """Ingest -> transform -> similarity -> seriation -> groups -> render.

    Writes every intermediate and final artifact into cfg.outdir and returns
    the artifact paths. Identical configurations produce byte-identical
    directory trees; each stage writes exactly what the corresponding CLI
    subcommand would.
    """
    scores = load_scores(cfg.scores_path, cfg.csv_kind)
    labels = load_labels(cfg.labels_path) if cfg.labels_path else None
    taxonomy = load_taxonomy(cfg.taxonomy_path) if cfg.taxonomy_path else None
    report = stage_validate(scores, labels, taxonomy, cfg.outdir)
    if not report.ok:
        raise InputError(
            "inputs are misaligned: "
            f"unknown classes {list(report.unknown_classes)}, "
            f"missing classes {list(report.missing_classes)}, "
            f"sample id mismatches {len(report.sample_id_mismatches)}")

    sim = stage_sim(scores, cfg.measure, cfg.transform, cfg.outdir)
    dend, ordering = stage_order(sim, cfg.ordering, taxonomy, cfg.outdir)
    part = None
    if dend is not None:
        part = stage_cut(dend, cfg.k, cfg.outdir)
    counts = None
    if labels is not None:
        counts = stage_cooccur(labels, scores.class_names, cfg.outdir)
    groups = None
    if part is not None:
        _, groups = stage_groups(sim, part, cfg.group_params, cfg.outdir,
                                 counts=counts)
    stage_stats(sim, cfg.n_bins, cfg.outdir)
    display_part = part if dend is not None and cfg.ordering == "hclust" else None
    stage_render(sim, ordering, display_part, groups, dend, cfg.outdir,
                 clip=cfg.clip, colormap=cfg.colormap,
                 cell_px=cfg.cell_px, fmt=cfg.fmt)
    stage_report(cfg.outdir, ordering_method=cfg.ordering)

    names = ["validation.json", "similarity.bsm", "ordering.json",
             "stats.json", "histogram.svg", "heatmap.svg", "report.html"]
    if cfg.transform != "none":
        names.append("scores_transformed.bsm")
    if dend is not None:
        names.extend(["dendrogram.json", "partition.json",
                      "memberships.bsm", "groups.json"])
        if cfg.ordering == "hclust":
            names.append("dendrogram.svg")
    if labels is not None:
        names.append("cooccurrence.bsm")
    if cfg.fmt == "png":
        names.append("heatmap.png")
    return [_out(cfg.outdir, n) for n in sorted(names)]
