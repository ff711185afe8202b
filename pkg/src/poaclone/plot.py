"""Minimal deterministic SVG charts rendered from CSV text."""

from __future__ import annotations

from typing import Optional
from xml.sax.saxutils import escape

from .sweep import read_csv

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
W, H = 640, 400
M = {"left": 60, "right": 140, "top": 30, "bottom": 50}


def _num(text: str) -> float:
    return float(text)


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def line_chart(csv_text: str, x: str, y: str, series: Optional[str] = None, title: str = "") -> str:
    """One polyline per distinct ``series`` value, points sorted by ``x``."""
    rows = read_csv(csv_text)
    groups: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        key = r[series] if series else y
        groups.setdefault(key, []).append((_num(r[x]), _num(r[y])))
    xs = [p[0] for pts in groups.values() for p in pts] or [0.0]
    ys = [p[1] for pts in groups.values() for p in pts] or [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(1.0, max(ys)) if y == "success_rate" else max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = W - M["left"] - M["right"], H - M["top"] - M["bottom"]

    def sx(v: float) -> float:
        return M["left"] + (v - x0) / (x1 - x0) * pw

    def sy(v: float) -> float:
        return M["top"] + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{M["left"]}" y1="{M["top"] + ph}" x2="{M["left"] + pw}" y2="{M["top"] + ph}" stroke="black"/>',
        f'<line x1="{M["left"]}" y1="{M["top"]}" x2="{M["left"]}" y2="{M["top"] + ph}" stroke="black"/>',
    ]
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        out.append(
            f'<text x="{M["left"] - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" font-size="10">{_fmt(yv)}</text>'
        )
    for xv in sorted(set(xs)):
        out.append(
            f'<text x="{sx(xv):.1f}" y="{M["top"] + ph + 14}" text-anchor="middle" font-size="9">{_fmt(xv)}</text>'
        )
    out.append(f'<text x="{M["left"] + pw / 2:.1f}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(x)}</text>')
    out.append(
        f'<text x="14" y="{M["top"] + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {M["top"] + ph / 2:.1f})">{escape(y)}</text>'
    )
    for i, key in enumerate(sorted(groups, key=lambda k: (len(k), k))):
        pts = sorted(groups[key])
        color = PALETTE[i % len(PALETTE)]
        path = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{path}"/>')
        for a, b in pts:
            out.append(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="2.5" fill="{color}"/>')
        ly = M["top"] + 16 * i + 10
        lx = W - M["right"] + 12
        label = f"{series}={key}" if series else key
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def region_heatmap(csv_text: str, title: str = "") -> str:
    """Grid of t (rows) by V (columns); colour encodes safe and live."""
    rows = read_csv(csv_text)
    ts = sorted({int(r["t"]) for r in rows})
    vs = sorted({int(r["V"]) for r in rows})
    cell = 28
    left, top = 50, 40
    width = left + cell * len(vs) + 170
    height = top + cell * len(ts) + 50
    colors = {(1, 1): "#2ca02c", (1, 0): "#1f77b4", (0, 1): "#ff7f0e", (0, 0): "#d9d9d9"}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for r in rows:
        t, v = int(r["t"]), int(r["V"])
        x = left + vs.index(v) * cell
        y = top + ts.index(t) * cell
        fill = colors[(int(r["safe"]), int(r["live"]))]
        out.append(f'<rect x="{x}" y="{y}" width="{cell - 1}" height="{cell - 1}" fill="{fill}"/>')
    for i, v in enumerate(vs):
        out.append(f'<text x="{left + i * cell + cell / 2:.1f}" y="{top - 6}" text-anchor="middle" font-size="10">{v}</text>')
    for i, t in enumerate(ts):
        out.append(f'<text x="{left - 6}" y="{top + i * cell + cell / 2 + 4:.1f}" text-anchor="end" font-size="10">{t}</text>')
    out.append(f'<text x="{left + cell * len(vs) / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">V</text>')
    out.append(f'<text x="16" y="{top + cell * len(ts) / 2:.1f}" font-size="12">t</text>')
    legend = [((1, 1), "safe and live"), ((1, 0), "safe only"), ((0, 1), "live only"), ((0, 0), "neither")]
    lx = left + cell * len(vs) + 16
    for i, (key, label) in enumerate(legend):
        y = top + i * 20
        out.append(f'<rect x="{lx}" y="{y}" width="14" height="14" fill="{colors[key]}"/>')
        out.append(f'<text x="{lx + 20}" y="{y + 11}" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
