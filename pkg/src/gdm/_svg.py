"""Hand-rolled SVG line charts; no plotting dependency needed for the one
figure the batch pipeline emits."""

from __future__ import annotations

from pathlib import Path

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def svg_line_chart(series: list[tuple[str, list[float], list[float]]],
                   path: str | Path, title: str = "", x_label: str = "",
                   y_label: str = "", width: int = 640, height: int = 420) -> None:
    """Write a minimal line chart.  ``series`` is a list of
    (name, x values, y values) triples sharing one coordinate system."""
    left, right, top, bottom = 62, 20, 34, 52
    plot_w, plot_h = width - left - right, height - top - bottom
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pad = 0.05 * (y_hi - y_lo) or 0.05
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    for tx in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(tx):.1f}" y1="{top + plot_h}" x2="{px(tx):.1f}" '
                     f'y2="{top + plot_h + 4}" stroke="#333"/>')
        parts.append(f'<text x="{px(tx):.1f}" y="{top + plot_h + 18}" '
                     f'text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{left - 4}" y1="{py(ty):.1f}" x2="{left}" '
                     f'y2="{py(ty):.1f}" stroke="#333"/>')
        parts.append(f'<text x="{left - 8}" y="{py(ty) + 4:.1f}" '
                     f'text-anchor="end">{ty:.3g}</text>')
    if x_label:
        parts.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 10}" '
                     f'text-anchor="middle">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
                     f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">{y_label}</text>')
    for k, (name, xs, ys) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        points = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                     'stroke-width="1.8"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.6" '
                         f'fill="{color}"/>')
        ly = top + 14 + 16 * k
        parts.append(f'<line x1="{left + plot_w - 110}" y1="{ly - 4}" '
                     f'x2="{left + plot_w - 90}" y2="{ly - 4}" stroke="{color}" '
                     'stroke-width="1.8"/>')
        parts.append(f'<text x="{left + plot_w - 84}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
