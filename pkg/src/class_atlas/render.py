"""Deterministic visual artifacts: heatmaps, dendrogram strips, histograms, report.

Every renderer here is a pure function from values to bytes. SVG is the
canonical format: elements are emitted in a fixed order (cells row-major,
then block outlines, then group overlays, then flag column), coordinates are
printed with exactly six decimals, and nothing varying (timestamps, ids,
library versions) is ever written, so identical inputs give byte-identical
files on every platform. PNG is a thin rasterization of the same layout,
encoded by hand (zlib + struct) to keep the byte stream under our control.

Layout constants are frozen: an 8-px margin on all four sides; group
brackets live inside the left margin and the auxiliary flag column inside
the right one, so image dimensions depend only on m and cell_px.
"""

from __future__ import annotations

import html
import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, EmptyReport, OrderingMismatch, SizeMismatch
from .groups import GroupSet
from .seriation import Dendrogram, Ordering, leaf_order
from .similarity import DistributionStats

MARGIN = 8  # px, all four sides, all renderers
DENDRO_W = 160  # px, dendrogram plot width (heights axis)
HIST_W, HIST_H = 480, 320  # px, histogram canvas

# Diverging stops: low -> white -> high; sequential: white -> high.
_LOW = np.array([0x31, 0x36, 0x95], dtype=np.float64)
_WHITE = np.array([0xFF, 0xFF, 0xFF], dtype=np.float64)
_HIGH = np.array([0xA5, 0x00, 0x26], dtype=np.float64)

_OVERLAY_PALETTE = ("#1B7837", "#762A83", "#E08214", "#2166AC")


@dataclass(frozen=True)
class RenderSpec:
    """Knobs shared by all renderers.

    ``spans`` are half-open display-position spans outlining diagonal blocks;
    ``flags`` optionally marks classes (by original index) for the auxiliary
    column along the right edge.
    """

    clip: tuple[float, float] = (-1.0, 1.0)
    colormap: str = "diverging"
    cell_px: int = 4
    spans: tuple[tuple[int, int], ...] = ()
    flags: tuple[bool, ...] | None = None
    format: str = "svg"

    def __post_init__(self):
        lo, hi = self.clip
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ConfigInvalid(f"clip must be finite with lo < hi, got {self.clip}")
        if self.colormap not in ("diverging", "sequential"):
            raise ConfigInvalid(f"unknown colormap {self.colormap!r}")
        if self.cell_px < 1:
            raise ConfigInvalid(f"cell_px must be >= 1, got {self.cell_px}")
        if self.format not in ("svg", "png"):
            raise ConfigInvalid(f"unknown format {self.format!r}")
        object.__setattr__(self, "clip", (float(lo), float(hi)))
        object.__setattr__(
            self, "spans", tuple((int(s), int(e)) for s, e in self.spans))
        if self.flags is not None:
            object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))


# ---------------------------------------------------------------------------
# colors
# ---------------------------------------------------------------------------

def _color_array(values: np.ndarray, spec: RenderSpec) -> np.ndarray:
    """Vectorized colormap: values -> uint8 RGB, round-half-up per channel."""
    lo, hi = spec.clip
    t = (np.clip(np.asarray(values, dtype=np.float64), lo, hi) - lo) / (hi - lo)
    if spec.colormap == "diverging":
        below = t < 0.5
        s = np.where(below, t / 0.5, (t - 0.5) / 0.5)
        c0 = np.where(below[..., None], _LOW, _WHITE)
        c1 = np.where(below[..., None], _WHITE, _HIGH)
    else:
        s = t
        c0 = np.broadcast_to(_WHITE, t.shape + (3,))
        c1 = np.broadcast_to(_HIGH, t.shape + (3,))
    mixed = c0 + (c1 - c0) * s[..., None]
    return np.floor(mixed + 0.5).astype(np.uint8)


def value_to_color(v: float, spec: RenderSpec) -> tuple[int, int, int]:
    """Map one value to an RGB triple after clamping to the clip range."""
    rgb = _color_array(np.array(v, dtype=np.float64), spec)
    return (int(rgb[0]), int(rgb[1]), int(rgb[2]))


def _hex(rgb) -> str:
    return f"#{rgb[0]:02X}{rgb[1]:02X}{rgb[2]:02X}"


def _f(x: float) -> str:
    return f"{x:.6f}"


# ---------------------------------------------------------------------------
# SVG primitives
# ---------------------------------------------------------------------------

def _svg_open(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
    ]


def _rect(x, y, w, h, fill=None, stroke=None, stroke_width=1.0) -> str:
    parts = [
        f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}"']
    parts.append(f' fill="{fill}"' if fill else ' fill="none"')
    if stroke:
        parts.append(f' stroke="{stroke}" stroke-width="{_f(stroke_width)}"')
    parts.append("/>")
    return "".join(parts)


def _line(x1, y1, x2, y2, stroke="#000000", stroke_width=1.0) -> str:
    return (f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(stroke_width)}"/>')


def _text(x, y, content: str, size=12) -> str:
    return (f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" '
            f'font-size="{size}" fill="#000000">{html.escape(content)}</text>')


def _close(parts: list[str]) -> bytes:
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# heatmap
# ---------------------------------------------------------------------------

def _heatmap_geometry(matrix: np.ndarray, ordering: Ordering, spec: RenderSpec):
    matrix = np.asarray(matrix, dtype=np.float64)
    m = len(ordering)
    if matrix.shape != (m, m):
        raise SizeMismatch(
            f"matrix shape {matrix.shape} does not match ordering length {m}")
    if spec.flags is not None and len(spec.flags) != m:
        raise SizeMismatch(f"{len(spec.flags)} flags for {m} classes")
    perm = np.array(ordering.permutation, dtype=np.intp)
    view = matrix[np.ix_(perm, perm)]
    size = m * spec.cell_px
    return view, perm, m, size, size + 2 * MARGIN


def _display_positions(ordering: Ordering) -> dict[int, int]:
    return {cls: pos for pos, cls in enumerate(ordering.permutation)}


def render_heatmap(
    matrix: np.ndarray,
    ordering: Ordering,
    spec: RenderSpec,
    groups: GroupSet | None = None,
) -> bytes:
    """Draw the permuted matrix as one colored square per cell.

    Row 0 of the display is the first class in the ordering, at the top.
    The RenderSpec's block spans become black outline rectangles on the
    diagonal; each group becomes a bracket in the left margin (a tick per
    member row joined by a thin spine); flagged classes get a filled square
    in the right margin.
    """
    if spec.format == "png":
        return _heatmap_png(matrix, ordering, spec, groups)
    view, perm, m, size, total = _heatmap_geometry(matrix, ordering, spec)
    cp = spec.cell_px
    colors = _color_array(view, spec)
    pos_of = _display_positions(ordering)
    parts = _svg_open(total, total)
    for i in range(m):
        y = MARGIN + i * cp
        row = colors[i]
        for j in range(m):
            parts.append(_rect(MARGIN + j * cp, y, cp, cp, fill=_hex(row[j])))
    for start, end in spec.spans:
        o = MARGIN + start * cp
        w = (end - start) * cp
        parts.append(_rect(o, o, w, w, stroke="#000000"))
    if groups is not None:
        for gi, g in enumerate(groups):
            color = _OVERLAY_PALETTE[gi % len(_OVERLAY_PALETTE)]
            rows = sorted(pos_of[i] for i in g.member_indices)
            centers = [MARGIN + r * cp + cp / 2 for r in rows]
            spine_x = MARGIN - 3.5
            parts.append(_line(spine_x, centers[0], spine_x, centers[-1],
                               stroke=color))
            for cy in centers:
                parts.append(_line(spine_x, cy, MARGIN - 0.5, cy, stroke=color))
    if spec.flags is not None:
        fx = MARGIN + size + 2
        for i in range(m):
            if spec.flags[perm[i]]:
                parts.append(_rect(fx, MARGIN + i * cp, 4, cp, fill="#000000"))
    return _close(parts)


def _heatmap_png(
    matrix: np.ndarray,
    ordering: Ordering,
    spec: RenderSpec,
    groups: GroupSet | None,
) -> bytes:
    view, perm, m, size, total = _heatmap_geometry(matrix, ordering, spec)
    cp = spec.cell_px
    canvas = np.full((total, total, 3), 255, dtype=np.uint8)
    cells = _color_array(view, spec)
    canvas[MARGIN:MARGIN + size, MARGIN:MARGIN + size] = (
        np.repeat(np.repeat(cells, cp, axis=0), cp, axis=1))
    for start, end in spec.spans:
        o = MARGIN + start * cp
        e = MARGIN + end * cp - 1
        canvas[o, o:e + 1] = 0
        canvas[e, o:e + 1] = 0
        canvas[o:e + 1, o] = 0
        canvas[o:e + 1, e] = 0
    if groups is not None:
        pos_of = _display_positions(ordering)
        for gi, g in enumerate(groups):
            color = _OVERLAY_PALETTE[gi % len(_OVERLAY_PALETTE)]
            rgb = tuple(int(color[i:i + 2], 16) for i in (1, 3, 5))
            rows = sorted(pos_of[i] for i in g.member_indices)
            top = MARGIN + rows[0] * cp + cp // 2
            bottom = MARGIN + rows[-1] * cp + cp // 2
            canvas[top:bottom + 1, 4] = rgb
            for r in rows:
                cy = MARGIN + r * cp + cp // 2
                canvas[cy, 4:MARGIN] = rgb
    if spec.flags is not None:
        fx = MARGIN + size + 2
        for i in range(m):
            if spec.flags[perm[i]]:
                y = MARGIN + i * cp
                canvas[y:y + cp, fx:fx + 4] = 0
    return encode_png(canvas)


# ---------------------------------------------------------------------------
# PNG encoder (truecolor 8-bit, no dependencies)
# ---------------------------------------------------------------------------

def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return (struct.pack(">I", len(data)) + tag + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF))


def encode_png(rgb: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as a PNG byte stream (filter 0 rows)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ConfigInvalid(f"expected an (H, W, 3) array, got {rgb.shape}")
    h, w, _ = rgb.shape
    rows = np.zeros((h, 1 + w * 3), dtype=np.uint8)
    rows[:, 1:] = rgb.reshape(h, w * 3)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n"
            + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(rows.tobytes(), 6))
            + _png_chunk(b"IEND", b""))


# ---------------------------------------------------------------------------
# dendrogram strip
# ---------------------------------------------------------------------------

def render_dendrogram(
    dend: Dendrogram, ordering: Ordering, spec: RenderSpec,
) -> bytes:
    """Orthogonal-edge tree strip whose leaf rows align with the heatmap.

    The x axis is merge height: leaves sit at the right edge, the root at
    the left, x linearly proportional to height. Requires the ordering to be
    exactly the dendrogram's own leaf order so rows line up.
    """
    if spec.format != "svg":
        raise ConfigInvalid("dendrogram rendering supports only SVG output")
    if ordering.permutation != leaf_order(dend).permutation:
        raise OrderingMismatch(
            "ordering does not match the dendrogram's leaf order")
    m = dend.n_leaves
    cp = spec.cell_px
    height = m * cp + 2 * MARGIN
    width = DENDRO_W + 2 * MARGIN
    hmax = max((mg.height for mg in dend.merges), default=0.0)
    if hmax <= 0.0:
        hmax = 1.0

    def x_of(h: float) -> float:
        return MARGIN + DENDRO_W * (1.0 - h / hmax)

    pos_of = _display_positions(ordering)
    node_x = {i: float(MARGIN + DENDRO_W) for i in range(m)}
    node_y = {i: MARGIN + pos_of[i] * cp + cp / 2 for i in range(m)}
    parts = _svg_open(width, height)
    for t, mg in enumerate(dend.merges):
        nx = x_of(mg.height)
        yl, yr = node_y[mg.left], node_y[mg.right]
        parts.append(_line(node_x[mg.left], yl, nx, yl))
        parts.append(_line(node_x[mg.right], yr, nx, yr))
        parts.append(_line(nx, min(yl, yr), nx, max(yl, yr)))
        node_x[m + t] = nx
        node_y[m + t] = (yl + yr) / 2
    return _close(parts)


# ---------------------------------------------------------------------------
# histogram
# ---------------------------------------------------------------------------

def render_histogram(stats: DistributionStats, spec: RenderSpec) -> bytes:
    """Bar chart of the stats histogram with a moments caption line."""
    if spec.format != "svg":
        raise ConfigInvalid("histogram rendering supports only SVG output")
    plot_x, plot_y = 2 * MARGIN, MARGIN
    plot_w = HIST_W - plot_x - 2 * MARGIN
    plot_h = HIST_H - 48
    baseline = plot_y + plot_h
    parts = _svg_open(HIST_W, HIST_H)
    n_bins = len(stats.histogram)
    max_count = max(count for _, _, count in stats.histogram)
    bar_w = plot_w / n_bins
    for i, (_, _, count) in enumerate(stats.histogram):
        if count == 0:
            continue
        bh = plot_h * (count / max_count)
        parts.append(_rect(plot_x + i * bar_w, baseline - bh, bar_w, bh,
                           fill="#313695"))
    parts.append(_line(plot_x, baseline, plot_x + plot_w, baseline))
    lo = stats.histogram[0][0]
    hi = stats.histogram[-1][1]
    caption = (f"n {stats.count}  range [{lo:.3f}, {hi:.3f}]  "
               f"mean {stats.mean:.3f}  std {stats.std:.3f}  "
               f"skewness {stats.skewness:.3f}  "
               f"excess kurtosis {stats.excess_kurtosis:.3f}")
    parts.append(_text(plot_x, HIST_H - 14, caption))
    return _close(parts)


# ---------------------------------------------------------------------------
# HTML report
# ---------------------------------------------------------------------------

_REPORT_CSS = (
    "body{font-family:sans-serif;max-width:72em;margin:1em auto;padding:0 1em}"
    "figure{margin:1em 0}figcaption{font-weight:bold;margin-bottom:.5em}"
    "table{border-collapse:collapse}td,th{border:1px solid #999;"
    "padding:.3em .6em;text-align:left}h1,h2{color:#313695}"
)


def render_report(
    heatmaps: list[tuple[str, bytes]] = (),
    dendrograms: list[tuple[str, bytes]] = (),
    histograms: list[tuple[str, bytes]] = (),
    group_tables: list[tuple[str, GroupSet, tuple[str, ...]]] = (),
    metadata: dict | None = None,
) -> bytes:
    """Assemble one self-contained HTML file from rendered SVG artifacts.

    SVG byte streams are inlined verbatim; the metadata dict is embedded as
    a canonical (sorted-keys) JSON block. No external resources are
    referenced, and identical inputs produce identical bytes.
    """
    if not (heatmaps or dendrograms or histograms or group_tables):
        raise EmptyReport("a report needs at least one artifact")

    def figures(items) -> list[str]:
        out = []
        for title, svg in items:
            out.append("<figure>")
            out.append(f"<figcaption>{html.escape(title)}</figcaption>")
            out.append(svg.decode("utf-8").rstrip("\n"))
            out.append("</figure>")
        return out

    parts = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        '<head><meta charset="utf-8"/><title>class similarity report</title>',
        f"<style>{_REPORT_CSS}</style></head>",
        "<body>",
        "<h1>Class similarity report</h1>",
    ]
    if metadata is not None:
        blob = json.dumps(metadata, sort_keys=True, indent=2)
        parts.append('<script type="application/json" id="metadata">')
        parts.append(blob.replace("<", "\\u003c"))
        parts.append("</script>")
    if heatmaps:
        parts.append("<section><h2>Similarity heatmaps</h2>")
        parts.extend(figures(heatmaps))
        parts.append("</section>")
    if dendrograms:
        parts.append("<section><h2>Dendrogram</h2>")
        parts.extend(figures(dendrograms))
        parts.append("</section>")
    if histograms:
        parts.append("<section><h2>Value distributions</h2>")
        parts.extend(figures(histograms))
        parts.append("</section>")
    if group_tables:
        parts.append("<section><h2>Detected groups</h2>")
        for title, groupset, class_names in group_tables:
            parts.append(f"<h3>{html.escape(title)}</h3>")
            parts.append("<table><tr><th>kind</th><th>members</th>"
                         "<th>score</th><th>notes</th></tr>")
            for g in groupset:
                members = ", ".join(
                    class_names[i] for i in sorted(g.member_indices))
                parts.append(
                    "<tr>"
                    f"<td>{html.escape(g.kind)}</td>"
                    f"<td>{html.escape(members)}</td>"
                    f"<td>{g.score:.4f}</td>"
                    f"<td>{html.escape(g.provenance)}</td>"
                    "</tr>")
            parts.append("</table>")
        parts.append("</section>")
    parts.append("</body></html>")
    return ("\n".join(parts) + "\n").encode("utf-8")
