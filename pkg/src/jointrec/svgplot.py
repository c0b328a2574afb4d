"""Minimal SVG line charts, dependency-free."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class LineSeries:
    label: str
    xs: list[float]
    ys: list[float]
    color: str = "#1f77b4"
    dash: str | None = None


@dataclass
class HLine:
    label: str
    y: float
    color: str = "#d62728"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / count
    return [lo + i * step for i in range(count + 1)]


def write_line_chart(
    path: str | Path,
    series: list[LineSeries],
    hlines: list[HLine] | None = None,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> None:
    """Render line series plus optional horizontal reference lines."""
    hlines = hlines or []
    xs = [x for s in series for x in s.xs]
    ys = [y for s in series for y in s.ys] + [h.y for h in hlines]
    if not xs or not ys:
        raise ValueError("nothing to plot")

    width, height = 860, 560
    ml, mr, mt, mb = 70, 230, 50, 60
    plot_w = width - ml - mr
    plot_h = height - mt - mb

    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo) or 1.0
    y_lo -= pad
    y_hi += pad

    def px(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return mt + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
    ]
    if title:
        out.append(
            f'<text x="{width / 2:.1f}" y="28" text-anchor="middle" '
            f'font-size="18" font-family="sans-serif">{_escape(title)}</text>'
        )

    for yv in _ticks(y_lo, y_hi):
        yy = py(yv)
        out.append(
            f'<line x1="{ml}" y1="{yy:.2f}" x2="{ml + plot_w}" y2="{yy:.2f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{ml - 8}" y="{yy + 4:.2f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{yv:.2f}</text>'
        )
    for xv in _ticks(x_lo, x_hi):
        xx = px(xv)
        out.append(
            f'<line x1="{xx:.2f}" y1="{mt + plot_h}" x2="{xx:.2f}" y2="{mt + plot_h + 5}" '
            'stroke="#000000" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{xx:.2f}" y="{mt + plot_h + 20}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{xv:.3g}</text>'
        )
    out.append(
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" y2="{mt + plot_h}" '
        'stroke="#000000" stroke-width="1.5"/>'
    )
    out.append(
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" '
        'stroke="#000000" stroke-width="1.5"/>'
    )
    if x_label:
        out.append(
            f'<text x="{ml + plot_w / 2:.1f}" y="{height - 18}" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif">{_escape(x_label)}</text>'
        )
    if y_label:
        out.append(
            f'<text x="20" y="{mt + plot_h / 2:.1f}" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif" '
            f'transform="rotate(-90 20 {mt + plot_h / 2:.1f})">{_escape(y_label)}</text>'
        )

    legend_x = ml + plot_w + 18
    legend_y = mt + 10
    entry = 0
    for h in hlines:
        yy = py(h.y)
        out.append(
            f'<line x1="{ml}" y1="{yy:.2f}" x2="{ml + plot_w}" y2="{yy:.2f}" '
            f'stroke="{h.color}" stroke-width="2" stroke-dasharray="7 4"/>'
        )
        ly = legend_y + entry * 22
        out.append(
            f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 24}" y2="{ly}" '
            f'stroke="{h.color}" stroke-width="2" stroke-dasharray="7 4"/>'
        )
        out.append(
            f'<text x="{legend_x + 30}" y="{ly + 4}" font-size="12" '
            f'font-family="sans-serif">{_escape(h.label)}</text>'
        )
        entry += 1
    for s in series:
        pts = sorted(zip(s.xs, s.ys))
        poly = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        out.append(
            f'<polyline fill="none" stroke="{s.color}" stroke-width="2"{dash} points="{poly}"/>'
        )
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{s.color}"/>')
        ly = legend_y + entry * 22
        out.append(
            f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 24}" y2="{ly}" '
            f'stroke="{s.color}" stroke-width="2"{dash}/>'
        )
        out.append(
            f'<text x="{legend_x + 30}" y="{ly + 4}" font-size="12" '
            f'font-family="sans-serif">{_escape(s.label)}</text>'
        )
        entry += 1

    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
