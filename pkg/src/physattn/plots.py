"""Static SVG charts written as plain markup.

Numbers are rendered with 6 significant digits and nothing time-dependent
is embedded, so identical inputs give identical bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 150, 40, 50


def num(x: float) -> str:
    return f"{x:.6g}"


def _frame(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{HEIGHT - BOTTOM}" x2="{WIDTH - RIGHT}" y2="{HEIGHT - BOTTOM}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{HEIGHT - BOTTOM}" stroke="black"/>',
    ]


def _legend(names) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = TOP + 18 * i
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{WIDTH - RIGHT + 12}" y="{y}" width="12" height="12" fill="{color}"/>')
        out.append(
            f'<text x="{WIDTH - RIGHT + 30}" y="{y + 11}" font-family="sans-serif" font-size="12">{escape(name)}</text>'
        )
    return out


def _y_ticks(lo: float, hi: float) -> list[str]:
    out = []
    plot_h = HEIGHT - TOP - BOTTOM
    for i in range(5):
        frac = i / 4
        y = HEIGHT - BOTTOM - frac * plot_h
        out.append(
            f'<text x="{LEFT - 6}" y="{num(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">'
            f"{num(lo + frac * (hi - lo))}</text>"
        )
    return out


def bar_chart(title: str, categories, series: dict) -> str:
    """Grouped bars; ``series`` maps a name to one value (or None) per category."""
    values = [v for vals in series.values() for v in vals if v is not None]
    hi = max(values + [0.0]) or 1.0
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM
    group_w = plot_w / max(len(categories), 1)
    bar_w = 0.8 * group_w / max(len(series), 1)
    parts = _frame(title) + _y_ticks(0.0, hi)
    for ci, cat in enumerate(categories):
        x0 = LEFT + ci * group_w + 0.1 * group_w
        parts.append(
            f'<text x="{num(LEFT + (ci + 0.5) * group_w)}" y="{HEIGHT - BOTTOM + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{escape(str(cat))}</text>'
        )
        for si, (name, vals) in enumerate(series.items()):
            v = vals[ci]
            if v is None:
                continue
            h = plot_h * v / hi
            parts.append(
                f'<rect x="{num(x0 + si * bar_w)}" y="{num(HEIGHT - BOTTOM - h)}" width="{num(bar_w)}" '
                f'height="{num(h)}" fill="{PALETTE[si % len(PALETTE)]}"><title>{escape(name)}={num(v)}</title></rect>'
            )
    parts += _legend(series)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_plot(title: str, xs, series: dict, y_range=(0.0, 1.0)) -> str:
    """One polyline per series; points whose value is None are skipped."""
    lo, hi = y_range
    x_lo, x_hi = min(xs), max(xs)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (hi - lo) or 1.0
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM
    parts = _frame(title) + _y_ticks(lo, hi)
    for x in xs:
        px = LEFT + plot_w * (x - x_lo) / x_span
        parts.append(
            f'<text x="{num(px)}" y="{HEIGHT - BOTTOM + 18}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{num(x)}</text>'
        )
    for si, (name, ys) in enumerate(series.items()):
        pts = [
            f"{num(LEFT + plot_w * (x - x_lo) / x_span)},{num(HEIGHT - BOTTOM - plot_h * (y - lo) / y_span)}"
            for x, y in zip(xs, ys)
            if y is not None
        ]
        parts.append(
            f'<polyline data-series="{escape(name)}" fill="none" stroke="{PALETTE[si % len(PALETTE)]}" '
            f'stroke-width="2" points="{" ".join(pts)}"/>'
        )
    parts += _legend(series)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def normalize(values) -> list:
    """Min-max scale to [0, 1], keeping None; a constant series maps to 0."""
    present = [v for v in values if v is not None]
    if not present:
        return list(values)
    lo, hi = min(present), max(present)
    span = hi - lo
    return [None if v is None else (0.0 if span == 0 else (v - lo) / span) for v in values]
