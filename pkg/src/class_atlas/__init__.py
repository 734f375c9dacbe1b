"""class-atlas: score-based class-similarity analysis for classifiers.

Given per-sample, per-class prediction scores, this package computes the
class-similarity matrix (correlations between per-class score columns),
seriates it with complete-linkage clustering, extracts coherent / split /
failed / star class groups, and renders deterministic heatmap, dendrogram,
and histogram artifacts plus a self-contained HTML report.
"""

from .errors import (
    ClassAtlasError,
    ConfigError,
    InputError,
    InvariantError,
)
from .groups import (
    Group,
    GroupSet,
    Memberships,
    failed_groups,
    fuzzy_cmeans,
    planted_overlap,
    recovered_groups,
    split_groups,
    star_classes,
)
from .ingest import (
    LabelData,
    ScoreMatrix,
    TaxNode,
    Taxonomy,
    ValidationReport,
    parse_labels,
    parse_scores_binary,
    parse_scores_csv,
    parse_taxonomy,
    validate_alignment,
    write_labels_csv,
    write_scores_binary,
    write_scores_csv,
    write_taxonomy_json,
)
from .pipeline import GroupParams, PipelineConfig, run_pipeline
from .render import (
    RenderSpec,
    encode_png,
    render_dendrogram,
    render_heatmap,
    render_histogram,
    render_report,
    value_to_color,
)
from .seriation import (
    Dendrogram,
    Merge,
    Ordering,
    Partition,
    block_spans,
    cophenetic,
    cut_dendrogram,
    hclust_complete,
    leaf_order,
    permute,
    permute_names,
    taxonomy_order,
    to_dissimilarity,
)
from .similarity import (
    CountMatrix,
    DistributionStats,
    SimilarityMatrix,
    confusion_matrix,
    cooccurrence_matrix,
    distribution_stats,
    offdiagonal_values,
    pearson_similarity,
    rank_rows,
    softmax_rows,
    spearman_similarity,
)
from .synth import SynthConfig, planted_partitions, synth_labels, synth_scores

__version__ = "0.1.0"

__all__ = [
    "ClassAtlasError", "ConfigError", "InputError", "InvariantError",
    "ScoreMatrix", "LabelData", "TaxNode", "Taxonomy", "ValidationReport",
    "parse_scores_csv", "parse_scores_binary", "write_scores_binary",
    "write_scores_csv", "write_labels_csv", "write_taxonomy_json",
    "parse_labels", "parse_taxonomy", "validate_alignment",
    "SimilarityMatrix", "CountMatrix", "DistributionStats",
    "softmax_rows", "rank_rows", "pearson_similarity", "spearman_similarity",
    "cooccurrence_matrix", "confusion_matrix", "distribution_stats",
    "offdiagonal_values",
    "Dendrogram", "Merge", "Ordering", "Partition",
    "to_dissimilarity", "hclust_complete", "cophenetic", "leaf_order",
    "taxonomy_order", "permute", "permute_names", "cut_dendrogram",
    "block_spans",
    "Memberships", "Group", "GroupSet",
    "fuzzy_cmeans", "recovered_groups", "split_groups", "failed_groups",
    "star_classes", "planted_overlap",
    "RenderSpec", "value_to_color", "render_heatmap", "render_dendrogram",
    "render_histogram", "render_report", "encode_png",
    "SynthConfig", "synth_scores", "synth_labels", "planted_partitions",
    "GroupParams", "PipelineConfig", "run_pipeline",
    "__version__",
]
