"""Corpus statistics and plot emission: frequency distribution, type-token
ratio, lexical-density curve, and a small deterministic SVG writer.

Lexical density is the fraction of content tokens, i.e. tokens not in a
caller-supplied stopword list; with an empty list every token counts as
content and the density is 1. Plots are self-contained SVG 1.1 files with a
sidecar CSV (header ``x,y`` or ``x,y,series``) holding the raw points;
identical input yields identical bytes.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus, SongRecord, clean_text
from .errors import AnalyticsError
from .tokenizer import word_tokenize

PLOT_KINDS = ("line", "bar", "heatmap")

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

Series = tuple[str, list[tuple[float, float]]]


@dataclass(frozen=True)
class FreqTable:
    """Exact multiset counts of word tokens."""

    counts: dict[str, int]
    total: int


@dataclass(frozen=True)
class LexicalStats:
    token_count: int
    unique_count: int
    type_token_ratio: float
    lexical_density: float


def freq_dist(tokens: list[str]) -> FreqTable:
    counts = Counter(tokens)
    return FreqTable(counts=dict(counts), total=len(tokens))


def lexical_stats(
    record: SongRecord, stopwords: frozenset[str] = frozenset()
) -> LexicalStats:
    """Token count, distinct count, type-token ratio, and content-word
    fraction for one song. Errors on lyrics that clean to nothing."""
    tokens = word_tokenize(clean_text(record.lyrics))
    if not tokens:
        raise AnalyticsError(f"no tokens after cleaning: {record.title!r}")
    unique = len(set(tokens))
    content = sum(1 for tok in tokens if tok not in stopwords)
    return LexicalStats(
        token_count=len(tokens),
        unique_count=unique,
        type_token_ratio=unique / len(tokens),
        lexical_density=content / len(tokens),
    )


def density_curve(
    corpus: Corpus,
    bin_width: int = 25,
    stopwords: frozenset[str] = frozenset(),
) -> list[tuple[int, float]]:
    """Mean lexical density per unique-token-count bin, sorted by bin.

    Bins are half-open intervals [k*bin_width, (k+1)*bin_width); each point
    is one song. Only occupied bins appear, labeled by their lower edge.
    """
    if len(corpus) == 0:
        raise AnalyticsError("cannot compute a density curve on an empty corpus")
    if bin_width < 1:
        raise AnalyticsError(f"bin_width must be >= 1, got {bin_width}")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for rec in corpus:
        stats = lexical_stats(rec, stopwords)
        bin_start = (stats.unique_count // bin_width) * bin_width
        sums[bin_start] = sums.get(bin_start, 0.0) + stats.lexical_density
        counts[bin_start] = counts.get(bin_start, 0) + 1
    return [(b, sums[b] / counts[b]) for b in sorted(sums)]


def _fmt(value: float) -> str:
    return format(float(value), ".6g")


def emit_plot(series: list[Series], path: str | Path, kind: str) -> Path:
    """Write an SVG chart plus a sidecar CSV of the raw points.

    ``series`` is a list of (name, points) pairs. For line and bar charts a
    point is (x, y); for a heatmap each series is one row and a point is
    (column, cell value). Deterministic bytes for identical input.
    """
    if kind not in PLOT_KINDS:
        raise AnalyticsError(f"unknown plot kind {kind!r}, expected one of {PLOT_KINDS}")
    if not series or all(len(points) == 0 for _, points in series):
        raise AnalyticsError("cannot plot empty series")
    path = Path(path)
    if kind == "heatmap":
        svg = _render_heatmap(series)
    elif kind == "bar":
        svg = _render_bar(series)
    else:
        svg = _render_line(series)
    path.write_text(svg, encoding="utf-8")
    sidecar = path.with_suffix(".csv")
    with sidecar.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if len(series) > 1:
            writer.writerow(["x", "y", "series"])
            for name, points in series:
                for x, y in points:
                    writer.writerow([repr(float(x)), repr(float(y)), name])
        else:
            writer.writerow(["x", "y"])
            for x, y in series[0][1]:
                writer.writerow([repr(float(x)), repr(float(y))])
    return path


def read_plot_csv(path: str | Path) -> list[Series]:
    """Reload a sidecar CSV into (name, points) pairs, exactly as plotted."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        grouped: dict[str, list[tuple[float, float]]] = {}
        for row in reader:
            name = row[2] if len(header) == 3 else ""
            grouped.setdefault(name, []).append((float(row[0]), float(row[1])))
    return [(name, points) for name, points in grouped.items()]


_WIDTH, _HEIGHT, _MARGIN = 640, 400, 60


def _ranges(series: list[Series]) -> tuple[float, float, float, float]:
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(min(ys), 0.0), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    return x_lo, x_hi, y_lo, y_hi


def _svg_open(title: str) -> list[str]:
    return [
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_WIDTH}" height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<title>{title}</title>',
    ]


def _legend(names: list[str]) -> list[str]:
    parts = []
    for i, name in enumerate(names):
        color = _PALETTE[i % len(_PALETTE)]
        x = _MARGIN + 140 * i
        parts.append(f'<rect x="{x}" y="12" width="12" height="12" fill="{color}"/>')
        parts.append(
            f'<text x="{x + 16}" y="22" font-family="sans-serif" '
            f'font-size="12">{name}</text>'
        )
    return parts


def _axes(x_lo, x_hi, y_lo, y_hi) -> list[str]:
    left, right = _MARGIN, _WIDTH - _MARGIN
    top, bottom = _MARGIN, _HEIGHT - _MARGIN
    return [
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
        f'<text x="{left}" y="{bottom + 16}" font-family="sans-serif" '
        f'font-size="11">{_fmt(x_lo)}</text>',
        f'<text x="{right - 30}" y="{bottom + 16}" font-family="sans-serif" '
        f'font-size="11">{_fmt(x_hi)}</text>',
        f'<text x="{left - 50}" y="{bottom}" font-family="sans-serif" '
        f'font-size="11">{_fmt(y_lo)}</text>',
        f'<text x="{left - 50}" y="{top + 10}" font-family="sans-serif" '
        f'font-size="11">{_fmt(y_hi)}</text>',
    ]


def _to_px(x, y, x_lo, x_hi, y_lo, y_hi) -> tuple[float, float]:
    px = _MARGIN + (x - x_lo) / (x_hi - x_lo) * (_WIDTH - 2 * _MARGIN)
    py = _HEIGHT - _MARGIN - (y - y_lo) / (y_hi - y_lo) * (_HEIGHT - 2 * _MARGIN)
    return px, py


def _render_line(series: list[Series]) -> str:
    x_lo, x_hi, y_lo, y_hi = _ranges(series)
    parts = _svg_open("line chart")
    parts += _legend([name for name, _ in series])
    parts += _axes(x_lo, x_hi, y_lo, y_hi)
    for i, (name, points) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(
            f"{_fmt(px)},{_fmt(py)}"
            for px, py in (
                _to_px(x, y, x_lo, x_hi, y_lo, y_hi) for x, y in sorted(points)
            )
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _render_bar(series: list[Series]) -> str:
    x_lo, x_hi, y_lo, y_hi = _ranges(series)
    parts = _svg_open("bar chart")
    parts += _legend([name for name, _ in series])
    parts += _axes(x_lo, x_hi, y_lo, y_hi)
    all_points = [
        (x, y, i) for i, (_, pts) in enumerate(series) for x, y in pts
    ]
    bar_width = (_WIDTH - 2 * _MARGIN) / max(len(all_points), 1) * 0.6
    baseline = _to_px(0.0, max(y_lo, 0.0), x_lo, x_hi, y_lo, y_hi)[1]
    for x, y, series_index in all_points:
        color = _PALETTE[series_index % len(_PALETTE)]
        px, py = _to_px(x, y, x_lo, x_hi, y_lo, y_hi)
        top = min(py, baseline)
        height = abs(baseline - py)
        parts.append(
            f'<rect x="{_fmt(px - bar_width / 2)}" y="{_fmt(top)}" '
            f'width="{_fmt(bar_width)}" height="{_fmt(height)}" fill="{color}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _render_heatmap(series: list[Series]) -> str:
    parts = _svg_open("heatmap")
    n_rows = len(series)
    n_cols = max(len(points) for _, points in series)
    peak = max((y for _, pts in series for _, y in pts), default=0.0)
    cell_w = (_WIDTH - 2 * _MARGIN) / max(n_cols, 1)
    cell_h = (_HEIGHT - 2 * _MARGIN) / max(n_rows, 1)
    for row, (name, points) in enumerate(series):
        ry = _MARGIN + row * cell_h
        parts.append(
            f'<text x="{_fmt(_MARGIN - 8)}" y="{_fmt(ry + cell_h / 2)}" '
            'font-family="sans-serif" font-size="11" '
            f'text-anchor="end">{name}</text>'
        )
        for x, value in sorted(points):
            col = int(x)
            shade = 0.0 if peak == 0 else value / peak
            # white to steel blue
            r = int(255 - shade * (255 - 31))
            g = int(255 - shade * (255 - 119))
            b = int(255 - shade * (255 - 180))
            cx = _MARGIN + col * cell_w
            parts.append(
                f'<rect x="{_fmt(cx)}" y="{_fmt(ry)}" width="{_fmt(cell_w)}" '
                f'height="{_fmt(cell_h)}" fill="rgb({r},{g},{b})" '
                'stroke="black" stroke-width="0.5"/>'
            )
            text_color = "black" if shade < 0.6 else "white"
            parts.append(
                f'<text x="{_fmt(cx + cell_w / 2)}" y="{_fmt(ry + cell_h / 2 + 4)}" '
                f'font-family="sans-serif" font-size="12" text-anchor="middle" '
                f'fill="{text_color}">{_fmt(value)}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
