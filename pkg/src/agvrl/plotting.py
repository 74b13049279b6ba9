"""Deterministic SVG rendering of learning curves and trajectories.

Output is plain text built with fixed number formatting, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .metrics import DEFAULT_ANNULUS
from .training import moving_average

PANEL_W, PANEL_H = 640, 240
MARGIN = 50


def _f(v: float) -> str:
    return f"{v:.2f}"


def _svg(width, height, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _nice_range(values) -> tuple[float, float]:
    if len(values) == 0:
        return 0.0, 1.0
    lo, hi = float(np.min(values)), float(np.max(values))
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _panel(x0, y0, title, xs, series, ylabel) -> list[str]:
    """One chart: axes, tick labels and a path per (values, colour, css class) series."""
    w, h = PANEL_W - 2 * MARGIN, PANEL_H - 2 * MARGIN
    left, top = x0 + MARGIN, y0 + MARGIN
    x_lo, x_hi = (0.0, 1.0) if len(xs) == 0 else (float(xs[0]), float(max(xs[-1], xs[0] + 1)))
    y_lo, y_hi = _nice_range(np.concatenate([v for v, _, _ in series]) if series else [])

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * w

    def py(y):
        return top + h - (y - y_lo) / (y_hi - y_lo) * h

    out = [f'<text x="{_f(left)}" y="{_f(top - 12)}" font-size="14" font-family="sans-serif">{escape(title)}</text>',
           f'<line class="axis" x1="{_f(left)}" y1="{_f(top + h)}" x2="{_f(left + w)}" y2="{_f(top + h)}" stroke="black"/>',
           f'<line class="axis" x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(top + h)}" stroke="black"/>']
    for k in range(5):
        yv = y_lo + (y_hi - y_lo) * k / 4
        xv = x_lo + (x_hi - x_lo) * k / 4
        out.append(f'<text x="{_f(left - 6)}" y="{_f(py(yv) + 4)}" font-size="10" text-anchor="end" '
                   f'font-family="sans-serif">{yv:.4g}</text>')
        out.append(f'<text x="{_f(px(xv))}" y="{_f(top + h + 14)}" font-size="10" text-anchor="middle" '
                   f'font-family="sans-serif">{xv:.4g}</text>')
    out.append(f'<text x="{_f(left + w / 2)}" y="{_f(top + h + 30)}" font-size="11" text-anchor="middle" '
               f'font-family="sans-serif">episode</text>')
    out.append(f'<text x="{_f(x0 + 12)}" y="{_f(top + h / 2)}" font-size="11" font-family="sans-serif" '
               f'transform="rotate(-90 {_f(x0 + 12)} {_f(top + h / 2)})" text-anchor="middle">{escape(ylabel)}</text>')
    for values, colour, cls in series:
        if len(values) == 0:
            continue
        d = " ".join(f"{'M' if i == 0 else 'L'}{_f(px(x))},{_f(py(y))}" for i, (x, y) in enumerate(zip(xs, values)))
        out.append(f'<path class="{cls}" d="{d}" fill="none" stroke="{colour}" stroke-width="1.2"/>')
    return out


def render_log_svg(logs, order: int = 50) -> str:
    """Return and step curves, each overlaid with its moving average."""
    xs = np.array([l.episode for l in logs], dtype=float)
    ret = np.array([l.ret for l in logs], dtype=float)
    steps = np.array([l.steps for l in logs], dtype=float)
    body = []
    for i, (title, vals, label) in enumerate((("Episode return", ret, "return"), ("Episode steps", steps, "steps"))):
        series = [] if len(vals) == 0 else [(vals, "#9ecae1", "raw"),
                                            (moving_average(vals, order), "#08519c", "moving-average")]
        body += _panel(0, i * PANEL_H, f"{title} (moving average, order {order})", xs, series, label)
    return _svg(PANEL_W, 2 * PANEL_H, body)


def render_trajectory_svg(world, trajectories, origin=None, annulus_width: float = DEFAULT_ANNULUS,
                          scale: float | None = None) -> str:
    """Map with walls, obstacles, spawn marker, annulus rings and one path per trajectory."""
    scale = scale or 600.0 / max(world.width, world.height)
    pad = 20
    W, H = world.width * scale + 2 * pad, world.height * scale + 2 * pad

    def px(x):
        return pad + x * scale

    def py(y):
        return pad + (world.height - y) * scale

    body = [f'<g class="walls" stroke="black" stroke-width="2">']
    for x1, y1, x2, y2 in world.walls:
        body.append(f'<line x1="{_f(px(x1))}" y1="{_f(py(y1))}" x2="{_f(px(x2))}" y2="{_f(py(y2))}"/>')
    body.append("</g>")
    for cx, cy, r in world.obstacles:
        body.append(f'<circle class="obstacle" cx="{_f(px(cx))}" cy="{_f(py(cy))}" r="{_f(r * scale)}" fill="#888888"/>')
    if origin is None and trajectories:
        origin = trajectories[0].origin
    if origin is not None:
        ox, oy = origin
        reach = max(math.hypot(cx - ox, cy - oy) for cx in (0, world.width) for cy in (0, world.height))
        for n in range(1, int(math.ceil(reach / annulus_width)) + 1):
            body.append(f'<circle class="annulus" cx="{_f(px(ox))}" cy="{_f(py(oy))}" r="{_f(n * annulus_width * scale)}" '
                        f'fill="none" stroke="#bbbbbb" stroke-dasharray="4 4"/>')
    palette = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
    for k, traj in enumerate(trajectories):
        d = " ".join(f"{'M' if i == 0 else 'L'}{_f(px(x))},{_f(py(y))}" for i, (x, y) in enumerate(zip(traj.x, traj.y)))
        body.append(f'<path class="trajectory" d="{d}" fill="none" stroke="{palette[k % len(palette)]}" stroke-width="1.5"/>')
    if origin is not None:
        body.append(f'<circle class="spawn" cx="{_f(px(origin[0]))}" cy="{_f(py(origin[1]))}" r="5" fill="black"/>')
    return _svg(_f(W), _f(H), body)
