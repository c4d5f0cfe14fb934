"""Minimal deterministic SVG line plots."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# colour roles follow the figures: ours green, simulator red, IS blue, truth black
COLORS = {
    "oee": "#2ca02c",
    "truth": "#000000",
    "simulated": "#d62728",
    "is": "#1f77b4",
    "mle": "#ff7f0e",
    "oracle": "#9467bd",
}
PALETTE = ("#2ca02c", "#d62728", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 40, 55


@dataclass
class Series:
    name: str
    x: list[float]
    y: list[float]
    band: list[float] | None = None  # half-width of a shaded band around y
    role: str | None = None


@dataclass
class FigureSpec:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    path: str | Path = "figure.svg"
    log_x: bool = False

    def validate(self) -> None:
        if not self.series:
            raise ValueError("a figure needs at least one series")
        for s in self.series:
            if len(s.x) != len(s.y) or not s.x:
                raise ValueError(f"series {s.name!r}: x and y must be nonempty and equally long")
            pts = np.asarray(list(s.x) + list(s.y), dtype=float)
            if not np.all(np.isfinite(pts)):
                raise ValueError(f"series {s.name!r} has non-finite points")
            if s.band is not None and (len(s.band) != len(s.y) or not np.all(np.isfinite(s.band))):
                raise ValueError(f"series {s.name!r}: band must be finite and match y")
            if self.log_x and min(s.x) <= 0:
                raise ValueError("log x axis needs positive x values")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(fig: FigureSpec) -> str:
    fig.validate()
    fx = (lambda v: math.log10(v)) if fig.log_x else (lambda v: float(v))
    xs = [fx(v) for s in fig.series for v in s.x]
    ys = [v for s in fig.series for v in s.y]
    for s in fig.series:
        if s.band is not None:
            ys += [y + b for y, b in zip(s.y, s.band)] + [y - b for y, b in zip(s.y, s.band)]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(v):
        return LEFT + (fx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
           f'<text x="{W / 2 - RIGHT / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
           f'font-size="15">{_esc(fig.title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444444"/>']
    for t in _ticks(x0, x1):
        X = LEFT + (t - x0) / (x1 - x0) * pw
        label = _tick(10**t) if fig.log_x else _tick(t)
        out.append(f'<line x1="{_fmt(X)}" y1="{TOP + ph}" x2="{_fmt(X)}" y2="{TOP + ph + 5}" stroke="#444444"/>')
        out.append(f'<text x="{_fmt(X)}" y="{TOP + ph + 19}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{label}</text>')
    for t in _ticks(y0, y1):
        Y = py(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{_fmt(Y)}" x2="{LEFT}" y2="{_fmt(Y)}" stroke="#444444"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_fmt(Y + 4)}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{_tick(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13">{_esc(fig.xlabel)}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">{_esc(fig.ylabel)}</text>')
    for k, s in enumerate(fig.series):
        color = COLORS.get((s.role or "").lower(), PALETTE[k % len(PALETTE)])
        order = sorted(range(len(s.x)), key=lambda i: fx(s.x[i]))
        if s.band is not None:
            upper = [f"{_fmt(px(s.x[i]))},{_fmt(py(s.y[i] + s.band[i]))}" for i in order]
            lower = [f"{_fmt(px(s.x[i]))},{_fmt(py(s.y[i] - s.band[i]))}" for i in reversed(order)]
            out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.18" '
                       f'stroke="none"/>')
        pts = " ".join(f"{_fmt(px(s.x[i]))},{_fmt(py(s.y[i]))}" for i in order)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = TOP + 14 + 18 * k
        out.append(f'<line x1="{W - RIGHT + 12}" y1="{ly}" x2="{W - RIGHT + 36}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 42}" y="{ly + 4}" font-family="sans-serif" font-size="12">'
                   f'{_esc(s.name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg_lineplot(fig: FigureSpec) -> Path:
    text = render_svg(fig)
    path = Path(fig.path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
