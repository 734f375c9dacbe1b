"""Command-line interface: composable subcommands over the pipeline stages.

Exit codes: 0 success, 2 input error (unreadable/malformed/misaligned data),
3 configuration error (bad flags, bad config file, unknown options), and 4
internal invariant violations. ``--help`` on any subcommand lists every flag
with its default.

A flat ``key=value`` config file (``--config``) can supply defaults for any
flag of the invoked subcommand (keys are flag names without the leading
dashes); values given on the command line always win. The environment
variable ``CLASS_ATLAS_THREADS`` caps worker parallelism (0 = auto); all
computations are defined to give byte-identical results at any setting.

Input-path flags default to the canonical artifact names inside ``--outdir``
(e.g. ``order`` reads ``<outdir>/similarity.bsm`` unless ``--sim`` is given),
so a pipeline can be reproduced stage by stage::

    class-atlas synth -o out
    class-atlas sim --scores out/scores.bsm -o out
    class-atlas order -o out
    class-atlas cut --k 4 -o out
    class-atlas groups -o out
    class-atlas render -o out
    class-atlas report -o out
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ClassAtlasError, ConfigError, ConfigInvalid, InputError, InvariantError
from . import pipeline as pl
from .groups import GroupSet
from .pipeline import GroupParams, PipelineConfig, run_pipeline
from .seriation import Dendrogram, Ordering, Partition
from .synth import SynthConfig

ENV_THREADS = "CLASS_ATLAS_THREADS"


def _parse_threads(value: str | None) -> int:
    """Validate the worker-parallelism cap from the environment (0 = auto)."""
    if value is None or value == "":
        return 0
    try:
        threads = int(value)
    except ValueError:
        raise ConfigInvalid(
            f"{ENV_THREADS} must be a non-negative integer, got {value!r}") from None
    if threads < 0:
        raise ConfigInvalid(
            f"{ENV_THREADS} must be a non-negative integer, got {value!r}")
    return threads


def _parse_clip(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigInvalid(f"clip must look like 'lo:hi', got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigInvalid(f"clip must be two numbers 'lo:hi', got {text!r}") from None
    if not lo < hi:
        raise ConfigInvalid(f"clip needs lo < hi, got {text!r}")
    return lo, hi


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigInvalid(f"expected a boolean, got {text!r}")


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage as a config error (exit 3), not exit 2."""

    def error(self, message):
        raise ConfigInvalid(message)


class _RecordedStore(argparse.Action):
    """store action that also records which dests were set on the command line."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        explicit = getattr(namespace, "_explicit", None)
        if explicit is None:
            explicit = set()
            setattr(namespace, "_explicit", explicit)
        explicit.add(self.dest)


def _read_config_file(path: str) -> dict[str, str]:
    raw = pl.read_file(path).decode("utf-8")
    out: dict[str, str] = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigInvalid(
                f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


class _Command:
    """One subcommand: wraps a parser, tracking per-option converters."""

    def __init__(self, subparsers, name: str, help_text: str):
        self.parser = subparsers.add_parser(name, help=help_text,
                                            description=help_text)
        self.parser.set_defaults(_command=self)
        self.converters: dict[str, object] = {}
        self.opt("--config", metavar="PATH",
                 help="flat key=value file of flag defaults")
        self.opt("--outdir", "-o", default=".", metavar="DIR",
                 help="artifact directory (default: current directory)")

    def opt(self, *names, type=str, default=None, choices=None, metavar=None,
            help=None):
        dest = names[0].lstrip("-").replace("-", "_")
        self.converters[dest] = type
        shown = default if default is not None else "none"
        self.parser.add_argument(
            *names, dest=dest, action=_RecordedStore, type=type,
            default=default, choices=choices, metavar=metavar,
            help=f"{help} (default: {shown})" if help else f"(default: {shown})")

    def apply_config(self, args: argparse.Namespace) -> None:
        if args.config is None:
            return
        values = _read_config_file(args.config)
        explicit = getattr(args, "_explicit", set())
        for key, text in values.items():
            if key not in self.converters:
                raise ConfigInvalid(
                    f"unknown config key {key!r} for this subcommand")
            if key in explicit:
                continue  # command-line flag wins
            converter = self.converters[key]
            setattr(args, key, converter(text))


def _indir(args, flag_value: str | None, name: str, required: bool) -> str | None:
    """Resolve an input path: explicit flag, else canonical name in outdir."""
    if flag_value is not None:
        return flag_value
    candidate = os.path.join(args.outdir, name)
    if os.path.exists(candidate):
        return candidate
    if required:
        raise InputError(f"missing input: pass a path or create {candidate}")
    return None


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def _load_scores_arg(args, required: bool = True):
    path = _indir(args, args.scores, "scores.bsm", required)
    return pl.load_scores(path, args.kind) if path else None


def cmd_validate(args) -> int:
    scores = _load_scores_arg(args)
    labels = pl.load_labels(args.labels) if args.labels else None
    taxonomy = pl.load_taxonomy(args.taxonomy) if args.taxonomy else None
    report = pl.stage_validate(scores, labels, taxonomy, args.outdir)
    print(report.to_json())
    if not report.ok:
        raise InputError("alignment problems found (see validation.json)")
    return 0


def cmd_sim(args) -> int:
    scores = _load_scores_arg(args)
    pl.stage_sim(scores, args.measure, args.transform, args.outdir)
    print(f"wrote {os.path.join(args.outdir, 'similarity.bsm')}")
    return 0


def cmd_order(args) -> int:
    sim = pl.load_similarity(_indir(args, args.sim, "similarity.bsm", True))
    taxonomy = pl.load_taxonomy(args.taxonomy) if args.taxonomy else None
    dend, _ = pl.stage_order(sim, args.method, taxonomy, args.outdir)
    print(f"wrote {os.path.join(args.outdir, 'ordering.json')}")
    if dend is not None:
        print(f"wrote {os.path.join(args.outdir, 'dendrogram.json')}")
    return 0


def cmd_cut(args) -> int:
    path = _indir(args, args.dendrogram, "dendrogram.json", True)
    dend = Dendrogram.from_json(pl.read_file(path).decode("utf-8"))
    pl.stage_cut(dend, args.k, args.outdir)
    print(f"wrote {os.path.join(args.outdir, 'partition.json')}")
    return 0


def cmd_groups(args) -> int:
    sim = pl.load_similarity(_indir(args, args.sim, "similarity.bsm", True))
    part_path = _indir(args, args.partition, "partition.json", True)
    part = Partition.from_json(pl.read_file(part_path).decode("utf-8"))
    counts_path = _indir(args, args.counts, "cooccurrence.bsm", False)
    counts = pl.load_counts(counts_path) if counts_path else None
    params = GroupParams(
        c=args.fuzzy_c, fuzzifier=args.fuzzifier, threshold=args.threshold,
        quantile=args.quantile, dispersion=args.dispersion,
        star_breadth=args.star_breadth, tol=args.tol,
        max_iter=args.max_iter, seed=args.seed)
    _, groupset = pl.stage_groups(sim, part, params, args.outdir, counts=counts)
    print(f"wrote {os.path.join(args.outdir, 'groups.json')} "
          f"({len(groupset)} groups)")
    return 0


def cmd_render(args) -> int:
    sim = pl.load_similarity(_indir(args, args.sim, "similarity.bsm", True))
    ord_path = _indir(args, args.ordering, "ordering.json", True)
    ordering = Ordering.from_json(pl.read_file(ord_path).decode("utf-8"))
    part_path = _indir(args, args.partition, "partition.json", False)
    part = (Partition.from_json(pl.read_file(part_path).decode("utf-8"))
            if part_path else None)
    groups_path = _indir(args, args.groups, "groups.json", False)
    groups = (GroupSet.from_json(pl.read_file(groups_path).decode("utf-8"),
                                 sim.class_names)
              if groups_path else None)
    dend_path = _indir(args, args.dendrogram, "dendrogram.json", False)
    dend = (Dendrogram.from_json(pl.read_file(dend_path).decode("utf-8"))
            if dend_path else None)
    pl.stage_render(sim, ordering, part, groups, dend, args.outdir,
                    clip=args.clip, colormap=args.colormap,
                    cell_px=args.cell_px, fmt=args.format)
    print(f"wrote {os.path.join(args.outdir, 'heatmap.' + args.format)}")
    return 0


def cmd_report(args) -> int:
    pl.stage_report(args.outdir, ordering_method=args.ordering_method)
    print(f"wrote {os.path.join(args.outdir, 'report.html')}")
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        depth=args.depth, branching=args.branching,
        samples_per_class=args.samples_per_class, alpha=args.alpha,
        beta=args.beta, sigma=args.sigma, seed=args.seed)
    scores = pl.stage_synth(cfg, args.outdir)
    print(f"wrote {os.path.join(args.outdir, 'scores.bsm')} "
          f"({scores.n_samples} samples x {scores.n_classes} classes)")
    return 0


def cmd_confusion(args) -> int:
    scores = _load_scores_arg(args)
    labels = pl.load_labels(_indir(args, args.labels, "labels.csv", True))
    pl.stage_confusion(scores, labels, args.outdir)
    print(f"wrote {os.path.join(args.outdir, 'confusion.bsm')}")
    return 0


def cmd_cooccur(args) -> int:
    scores = _load_scores_arg(args)
    labels = pl.load_labels(_indir(args, args.labels, "labels.csv", True))
    pl.stage_cooccur(labels, scores.class_names, args.outdir)
    print(f"wrote {os.path.join(args.outdir, 'cooccurrence.bsm')}")
    return 0


def cmd_stats(args) -> int:
    sim = pl.load_similarity(_indir(args, args.sim, "similarity.bsm", True))
    stats = pl.stage_stats(sim, args.bins, args.outdir)
    print(stats.to_json())
    return 0


def cmd_pipeline(args) -> int:
    params = GroupParams(
        c=args.fuzzy_c, fuzzifier=args.fuzzifier, threshold=args.threshold,
        quantile=args.quantile, dispersion=args.dispersion,
        star_breadth=args.star_breadth, tol=args.tol,
        max_iter=args.max_iter, seed=args.seed)
    cfg = PipelineConfig(
        scores_path=_indir(args, args.scores, "scores.bsm", True),
        labels_path=args.labels, taxonomy_path=args.taxonomy,
        csv_kind=args.kind, measure=args.measure, transform=args.transform,
        ordering=args.method, k=args.k, group_params=params,
        n_bins=args.bins, clip=args.clip, colormap=args.colormap,
        cell_px=args.cell_px, fmt=args.format, outdir=args.outdir)
    for path in run_pipeline(cfg):
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def _add_scores_opts(cmd: _Command):
    cmd.opt("--scores", metavar="PATH",
            help="score matrix, .csv or .bsm (default: <outdir>/scores.bsm)")
    cmd.opt("--kind", default="logit",
            choices=["logit", "probability", "rank"],
            help="score kind for CSV input (BSM1 files are self-describing)")


def _add_group_opts(cmd: _Command):
    cmd.opt("--fuzzy-c", type=int, metavar="N",
            help="fuzzy cluster count (default: number of blocks)")
    cmd.opt("--fuzzifier", type=float, default=2.0)
    cmd.opt("--threshold", type=float, default=0.2,
            help="membership threshold for recovered groups")
    cmd.opt("--quantile", type=float, default=0.95,
            help="split-pair quantile over inter-block means")
    cmd.opt("--dispersion", type=float, default=0.5,
            help="failed-group dispersion threshold")
    cmd.opt("--star-breadth", type=float, default=0.5,
            help="star-class co-occurrence breadth threshold")
    cmd.opt("--tol", type=float, default=1e-7)
    cmd.opt("--max-iter", type=int, default=300)
    cmd.opt("--seed", type=int, default=0)


def _add_render_opts(cmd: _Command):
    cmd.opt("--clip", type=_parse_clip, default=(-1.0, 1.0), metavar="LO:HI",
            help="value range mapped onto the colormap")
    cmd.opt("--colormap", default="diverging",
            choices=["diverging", "sequential"])
    cmd.opt("--cell-px", type=int, default=4, help="pixels per matrix cell")
    cmd.opt("--format", default="svg", choices=["svg", "png"],
            help="heatmap output format (SVG is always written)")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="class-atlas",
        description="Score-based class-similarity analysis: similarity "
                    "matrices, seriation, group detection, reports.")
    from . import __version__
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    c = _Command(sub, "validate", "parse inputs and report alignment problems")
    _add_scores_opts(c)
    c.opt("--labels", metavar="PATH", help="labels CSV")
    c.opt("--taxonomy", metavar="PATH", help="taxonomy JSON")
    c.parser.set_defaults(func=cmd_validate)

    c = _Command(sub, "sim", "compute the class-similarity matrix")
    _add_scores_opts(c)
    c.opt("--measure", default="pearson", choices=["pearson", "spearman"])
    c.opt("--transform", default="none", choices=["none", "softmax", "rank"],
          help="score transform applied before correlating")
    c.parser.set_defaults(func=cmd_sim)

    c = _Command(sub, "order", "order classes by clustering or taxonomy")
    c.opt("--sim", metavar="PATH", help="similarity.bsm")
    c.opt("--method", default="hclust", choices=["hclust", "taxonomy"])
    c.opt("--taxonomy", metavar="PATH", help="taxonomy JSON (method=taxonomy)")
    c.parser.set_defaults(func=cmd_order)

    c = _Command(sub, "cut", "cut the dendrogram into diagonal blocks")
    c.opt("--dendrogram", metavar="PATH", help="dendrogram.json")
    c.opt("--k", type=int, default=2, help="number of blocks")
    c.parser.set_defaults(func=cmd_cut)

    c = _Command(sub, "groups", "detect recovered/split/failed/star groups")
    c.opt("--sim", metavar="PATH", help="similarity.bsm")
    c.opt("--partition", metavar="PATH", help="partition.json")
    c.opt("--counts", metavar="PATH",
          help="cooccurrence.bsm for star detection")
    _add_group_opts(c)
    c.parser.set_defaults(func=cmd_groups)

    c = _Command(sub, "render", "render the seriated heatmap (and tree strip)")
    c.opt("--sim", metavar="PATH", help="similarity.bsm")
    c.opt("--ordering", metavar="PATH", help="ordering.json")
    c.opt("--partition", metavar="PATH", help="partition.json (block outlines)")
    c.opt("--groups", metavar="PATH", help="groups.json (overlays)")
    c.opt("--dendrogram", metavar="PATH", help="dendrogram.json (tree strip)")
    _add_render_opts(c)
    c.parser.set_defaults(func=cmd_render)

    c = _Command(sub, "report", "assemble report.html from the artifact directory")
    c.opt("--ordering-method", default="hclust",
          choices=["hclust", "taxonomy"], help="recorded in report metadata")
    c.parser.set_defaults(func=cmd_report)

    c = _Command(sub, "synth", "generate planted-hierarchy synthetic scores")
    c.opt("--depth", type=int, default=2, help="tree depth L")
    c.opt("--branching", type=int, default=2, help="children per node b")
    c.opt("--samples-per-class", type=int, default=40)
    c.opt("--alpha", type=float, default=4.0, help="shared-ancestor signal")
    c.opt("--beta", type=float, default=2.0, help="own-class boost")
    c.opt("--sigma", type=float, default=1.0, help="noise std")
    c.opt("--seed", type=int, default=0)
    c.parser.set_defaults(func=cmd_synth)

    c = _Command(sub, "confusion", "true-vs-predicted counts (single-label)")
    _add_scores_opts(c)
    c.opt("--labels", metavar="PATH", help="labels CSV (default: <outdir>/labels.csv)")
    c.parser.set_defaults(func=cmd_confusion)

    c = _Command(sub, "cooccur", "label co-occurrence counts (multi-label)")
    _add_scores_opts(c)
    c.opt("--labels", metavar="PATH", help="labels CSV (default: <outdir>/labels.csv)")
    c.parser.set_defaults(func=cmd_cooccur)

    c = _Command(sub, "stats", "off-diagonal distribution stats + histogram")
    c.opt("--sim", metavar="PATH", help="similarity.bsm")
    c.opt("--bins", type=int, default=32, help="histogram bin count")
    c.parser.set_defaults(func=cmd_stats)

    c = _Command(sub, "pipeline", "run every stage in order")
    _add_scores_opts(c)
    c.opt("--labels", metavar="PATH", help="labels CSV")
    c.opt("--taxonomy", metavar="PATH", help="taxonomy JSON")
    c.opt("--measure", default="pearson", choices=["pearson", "spearman"])
    c.opt("--transform", default="none", choices=["none", "softmax", "rank"])
    c.opt("--method", default="hclust", choices=["hclust", "taxonomy"],
          help="ordering method")
    c.opt("--k", type=int, default=2, help="dendrogram cut size")
    c.opt("--bins", type=int, default=32, help="histogram bin count")
    _add_group_opts(c)
    _add_render_opts(c)
    c.parser.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        _parse_threads(os.environ.get(ENV_THREADS))
        parser = build_parser()
        args = parser.parse_args(argv)
        args._command.apply_config(args)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except ClassAtlasError as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
