"""Leaderboards, comparison plots, and the quality/throughput stability analyses.

Plots are emitted as plain SVG: textual, diffable, and parseable in
tests without a plotting dependency. Every report header states that
fitness uses the natural logarithm of memory. Emitters write files
atomically (temp file + rename) so a crashed run never leaves a torn
artifact behind.
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from nlubench.errors import HarnessError
from nlubench.metrics import ModelProfile
from nlubench.tasks import Suite

SCHEMA_VERSION = 1


class ReportError(HarnessError):
    """Report inputs are empty or inconsistent."""


@dataclass(frozen=True)
class LeaderboardEntry:
    rank: int
    model_id: str
    q: float
    tp: float
    m: float
    f: float


@dataclass(frozen=True)
class Leaderboard:
    suite: Suite
    entries: tuple[LeaderboardEntry, ...]
    generated_at: str = ""
    config_echo: Mapping = field(default_factory=dict)


def build_leaderboard(
    profiles: Sequence[ModelProfile],
    suite: Suite,
    generated_at: str = "",
    config_echo: Mapping | None = None,
) -> Leaderboard:
    """Rank profiles by fitness, descending; ties fall back to q, tp, m, then name."""
    if not profiles:
        raise ReportError("no profiles to rank")
    for p in profiles:
        if p.suite is not suite:
            raise ReportError(f"profile {p.model_id!r} belongs to suite {p.suite.value}, not {suite.value}")
    ordered = sorted(profiles, key=lambda p: (-p.f, -p.q, -p.tp, p.m, p.model_id))
    entries = tuple(
        LeaderboardEntry(rank=i, model_id=p.model_id, q=p.q, tp=p.tp, m=p.m, f=p.f)
        for i, p in enumerate(ordered, start=1)
    )
    return Leaderboard(suite=suite, entries=entries, generated_at=generated_at,
                       config_echo=dict(config_echo or {}))


def leaderboard_to_json(board: Leaderboard) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "suite": board.suite.value,
        "fitness": "q * tp / ln(m_bytes)",
        "generated_at": board.generated_at,
        "config_echo": dict(board.config_echo),
        "entries": [
            {
                "rank": e.rank,
                "model_id": e.model_id,
                "q": e.q,
                "tp": e.tp,
                "m_bytes": e.m,
                "f": e.f,
            }
            for e in board.entries
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def leaderboard_to_markdown(board: Leaderboard) -> str:
    lines = [
        f"# Leaderboard — {board.suite.value} suite",
        "",
        "F = Q x Tp / ln(M), M in bytes (natural logarithm).",
        "",
        "| Rank | Model | Q | Tp (samples/s) | M (bytes) | F |",
        "| ---: | :--- | ---: | ---: | ---: | ---: |",
    ]
    for e in board.entries:
        lines.append(
            f"| {e.rank} | {e.model_id} | {e.q:.4f} | {e.tp:.2f} | {e.m:.0f} | {e.f:.4f} |"
        )
    return "\n".join(lines) + "\n"


class PlotKind(str, Enum):
    BUBBLE_SCATTER = "bubble_scatter"
    QUALITY_MEAN_MAX = "quality_mean_max"
    NORMALIZED_THROUGHPUT = "normalized_throughput"


@dataclass(frozen=True)
class PlotSpec:
    kind: PlotKind
    series: tuple[Mapping, ...]
    x_label: str
    y_label: str
    width: int = 640
    height: int = 480
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.series:
            raise ReportError("plot series must be non-empty")
        if self.kind is PlotKind.BUBBLE_SCATTER:
            for s in self.series:
                r = s["radius"]
                if not (math.isfinite(r) and r > 0):
                    raise ReportError(f"bubble radius {r!r} for {s.get('model')!r} not finite positive")


R_MIN, R_MAX = 4.0, 24.0

_MARGIN = {"left": 70.0, "right": 110.0, "top": 40.0, "bottom": 55.0}


def _affine(value: float, lo: float, hi: float, out_lo: float, out_hi: float) -> float:
    if hi == lo:
        return (out_lo + out_hi) / 2
    return out_lo + (value - lo) * (out_hi - out_lo) / (hi - lo)


def build_bubble_spec(profiles: Sequence[ModelProfile]) -> PlotSpec:
    """x is quality, y is throughput, circle radius encodes ln(memory)."""
    if not profiles:
        raise ReportError("no profiles to plot")
    log_ms = [math.log(p.m) for p in profiles]
    lo, hi = min(log_ms), max(log_ms)
    series = tuple(
        {
            "model": p.model_id,
            "q": p.q,
            "tp": p.tp,
            "m": p.m,
            "radius": _affine(lm, lo, hi, R_MIN, R_MAX),
        }
        for p, lm in zip(profiles, log_ms)
    )
    return PlotSpec(
        kind=PlotKind.BUBBLE_SCATTER,
        series=series,
        x_label="quality Q",
        y_label="throughput Tp (samples/s)",
        meta={"radius_note": "radius affine in ln(m_bytes)"},
    )


def bubble_scatter(profiles: Sequence[ModelProfile]) -> str:
    """The quality-vs-throughput bubble chart as an SVG document."""
    return render_plot(build_bubble_spec(profiles))


def quality_mean_max(
    runs: Mapping[str, Sequence[float]], seed: int = 0
) -> tuple[PlotSpec, dict]:
    """Mean-vs-best quality per model, with seeded vertical jitter for readability.

    The summary reports both orderings and any pair of models whose
    relative order differs between the mean and max views.
    """
    if not runs:
        raise ReportError("no quality runs to analyse")
    stats: dict[str, tuple[float, float]] = {}
    for model, values in runs.items():
        if not values:
            raise ReportError(f"model {model!r} has an empty run list")
        stats[model] = (sum(values) / len(values), max(values))

    rng = random.Random(seed)
    series = tuple(
        {
            "model": model,
            "mean": stats[model][0],
            "max": stats[model][1],
            "jitter_mean": rng.uniform(-1.0, 1.0),
            "jitter_max": rng.uniform(-1.0, 1.0),
        }
        for model in runs
    )
    mean_order = sorted(stats, key=lambda m: (-stats[m][0], m))
    max_order = sorted(stats, key=lambda m: (-stats[m][1], m))
    swaps = sorted(
        (a, b)
        for i, a in enumerate(sorted(stats))
        for b in sorted(stats)[i + 1:]
        if (stats[a][0] - stats[b][0]) * (stats[a][1] - stats[b][1]) < 0
    )
    summary = {
        "per_model": {m: {"mean": mu, "max": mx} for m, (mu, mx) in stats.items()},
        "mean_order": mean_order,
        "max_order": max_order,
        "orderings_match": mean_order == max_order,
        "rank_swaps": [list(pair) for pair in swaps],
    }
    spec = PlotSpec(
        kind=PlotKind.QUALITY_MEAN_MAX,
        series=series,
        x_label="model",
        y_label="quality",
        meta={"jitter_seed": seed},
    )
    return spec, summary


def normalized_throughput(
    per_set: Mapping[str, Mapping[str, float]]
) -> tuple[PlotSpec, dict]:
    """Min-max normalize throughput within each task subset and compare orderings.

    A degenerate subset (all models equal) normalizes to 0 by convention
    and is flagged. Switches are model pairs whose relative order flips
    between consecutive subsets.
    """
    if not per_set:
        raise ReportError("no task subsets to analyse")
    subsets = list(per_set)
    model_set = set(per_set[subsets[0]])
    for name in subsets:
        if set(per_set[name]) != model_set:
            raise ReportError(f"subset {name!r} has a different model set")
    if not model_set:
        raise ReportError("subsets contain no models")
    models = sorted(model_set)

    normalized: dict[str, dict[str, float]] = {}
    degenerate: list[str] = []
    for name in subsets:
        values = per_set[name]
        lo, hi = min(values.values()), max(values.values())
        if hi == lo:
            degenerate.append(name)
            normalized[name] = {m: 0.0 for m in models}
        else:
            normalized[name] = {m: (values[m] - lo) / (hi - lo) for m in models}

    orderings = {
        name: sorted(models, key=lambda m: (-per_set[name][m], m)) for name in subsets
    }
    switches = []
    for prev, cur in zip(subsets, subsets[1:]):
        for i, a in enumerate(models):
            for b in models[i + 1:]:
                before = per_set[prev][a] - per_set[prev][b]
                after = per_set[cur][a] - per_set[cur][b]
                if before * after < 0:
                    switches.append({"between": [prev, cur], "pair": [a, b]})

    series = tuple(
        {"model": m, "values": tuple(normalized[name][m] for name in subsets)}
        for m in models
    )
    report = {
        "subset_order": subsets,
        "orderings": orderings,
        "switches": switches,
        "degenerate_subsets": degenerate,
    }
    spec = PlotSpec(
        kind=PlotKind.NORMALIZED_THROUGHPUT,
        series=series,
        x_label="task subset",
        y_label="normalized throughput",
        meta={"subsets": tuple(subsets)},
    )
    return spec, report


def render_plot(spec: PlotSpec) -> str:
    """Render any PlotSpec to a standalone SVG document."""
    if spec.kind is PlotKind.BUBBLE_SCATTER:
        return _render_bubble(spec)
    if spec.kind is PlotKind.QUALITY_MEAN_MAX:
        return _render_quality(spec)
    if spec.kind is PlotKind.NORMALIZED_THROUGHPUT:
        return _render_parallel(spec)
    raise ReportError(f"no renderer for plot kind {spec.kind}")


def _plot_box(spec: PlotSpec) -> tuple[float, float, float, float]:
    x0 = _MARGIN["left"]
    x1 = spec.width - _MARGIN["right"]
    y0 = _MARGIN["top"]
    y1 = spec.height - _MARGIN["bottom"]
    return x0, x1, y0, y1


def _svg_open(spec: PlotSpec, title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
        f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
        f'<text x="{spec.width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-size="14" font-family="sans-serif">{escape(title)}</text>',
    ]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + i * (hi - lo) / (n - 1) for i in range(n)]


def _axes(spec: PlotSpec, x_dom: tuple[float, float], y_dom: tuple[float, float]) -> list[str]:
    x0, x1, y0, y1 = _plot_box(spec)
    parts = [
        f'<line x1="{x0:.1f}" y1="{y1:.1f}" x2="{x1:.1f}" y2="{y1:.1f}" stroke="black"/>',
        f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x0:.1f}" y2="{y1:.1f}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{spec.height - 10:.1f}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{escape(spec.x_label)}</text>',
        f'<text x="18" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 18 {(y0 + y1) / 2:.1f})">'
        f'{escape(spec.y_label)}</text>',
    ]
    for t in _ticks(*x_dom):
        tx = _affine(t, x_dom[0], x_dom[1], x0, x1)
        parts.append(f'<line x1="{tx:.1f}" y1="{y1:.1f}" x2="{tx:.1f}" y2="{y1 + 5:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{tx:.1f}" y="{y1 + 18:.1f}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{t:.3g}</text>'
        )
    for t in _ticks(*y_dom):
        ty = _affine(t, y_dom[0], y_dom[1], y1, y0)
        parts.append(f'<line x1="{x0 - 5:.1f}" y1="{ty:.1f}" x2="{x0:.1f}" y2="{ty:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8:.1f}" y="{ty + 3:.1f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{t:.3g}</text>'
        )
    return parts


def _domain(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
    else:
        pad = (hi - lo) * 0.08
    return lo - pad, hi + pad


def _render_bubble(spec: PlotSpec) -> str:
    x0, x1, y0, y1 = _plot_box(spec)
    x_dom = _domain([s["q"] for s in spec.series])
    y_dom = _domain([s["tp"] for s in spec.series])
    parts = _svg_open(spec, "Model comparison: quality vs throughput, circle size ~ ln(memory)")
    parts += _axes(spec, x_dom, y_dom)
    for s in spec.series:
        cx = _affine(s["q"], x_dom[0], x_dom[1], x0, x1)
        cy = _affine(s["tp"], y_dom[0], y_dom[1], y1, y0)
        parts.append(
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{s["radius"]:.1f}" '
            f'fill="steelblue" fill-opacity="0.55" stroke="steelblue"/>'
        )
        parts.append(
            f'<text x="{cx + s["radius"] + 3:.1f}" y="{cy + 3:.1f}" font-size="10" '
            f'font-family="sans-serif">{escape(s["model"])}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


_JITTER_PX = 4.0


def _render_quality(spec: PlotSpec) -> str:
    x0, x1, y0, y1 = _plot_box(spec)
    values = [s["mean"] for s in spec.series] + [s["max"] for s in spec.series]
    y_dom = _domain(values)
    parts = _svg_open(spec, "Quality per model: mean (pale square) vs best (solid circle)")
    n = len(spec.series)
    parts += _axes(spec, (0, max(n - 1, 1)), y_dom)
    for i, s in enumerate(spec.series):
        cx = _affine(i, 0, max(n - 1, 1), x0, x1)
        y_mean = _affine(s["mean"], y_dom[0], y_dom[1], y1, y0) + s["jitter_mean"] * _JITTER_PX
        y_max = _affine(s["max"], y_dom[0], y_dom[1], y1, y0) + s["jitter_max"] * _JITTER_PX
        parts.append(
            f'<rect x="{cx - 4:.1f}" y="{y_mean - 4:.1f}" width="8" height="8" '
            f'fill="indianred" fill-opacity="0.35"/>'
        )
        parts.append(f'<circle cx="{cx:.1f}" cy="{y_max:.1f}" r="5" fill="indianred"/>')
        parts.append(
            f'<text x="{cx:.1f}" y="{y1 + 32:.1f}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{escape(s["model"])}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _render_parallel(spec: PlotSpec) -> str:
    x0, x1, y0, y1 = _plot_box(spec)
    subsets = list(spec.meta["subsets"])
    n_axes = len(subsets)
    axis_x = [
        _affine(i, 0, max(n_axes - 1, 1), x0, x1) if n_axes > 1 else (x0 + x1) / 2
        for i in range(n_axes)
    ]
    parts = _svg_open(spec, "Normalized throughput across task subsets")
    for ax, name in zip(axis_x, subsets):
        parts.append(f'<line x1="{ax:.1f}" y1="{y0:.1f}" x2="{ax:.1f}" y2="{y1:.1f}" stroke="grey"/>')
        parts.append(
            f'<text x="{ax:.1f}" y="{y1 + 18:.1f}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{escape(name)}</text>'
        )
    parts.append(
        f'<text x="18" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 18 {(y0 + y1) / 2:.1f})">'
        f'{escape(spec.y_label)}</text>'
    )
    palette = ["steelblue", "indianred", "seagreen", "darkorange", "mediumpurple", "goldenrod"]
    for idx, s in enumerate(spec.series):
        points = " ".join(
            f"{ax:.1f},{_affine(v, 0.0, 1.0, y1, y0):.1f}"
            for ax, v in zip(axis_x, s["values"])
        )
        color = palette[idx % len(palette)]
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        last_y = _affine(s["values"][-1], 0.0, 1.0, y1, y0)
        parts.append(
            f'<text x="{axis_x[-1] + 6:.1f}" y="{last_y + 3:.1f}" font-size="10" '
            f'fill="{color}" font-family="sans-serif">{escape(s["model"])}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / f".{path.name}.{os.getpid()}.tmp"
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
