"""Minimal hand-written SVG plots: speed traces and trajectory overlays."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _fmt(x: float) -> str:
    return f"{x:.6g}"


class _Panel:
    """Axes box mapping data coordinates onto an SVG rectangle."""

    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x, dtype=float) - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y, dtype=float) - lo) / (hi - lo) * self.h

    def frame(self, xlabel: str, ylabel: str) -> list[str]:
        out = [f'<rect x="{self.x0}" y="{self.y0}" width="{self.w}" height="{self.h}" '
               'fill="none" stroke="#444" stroke-width="1"/>']
        for t in _nice_ticks(*self.xlim):
            x = float(self.px(t))
            out.append(f'<line x1="{x:.2f}" y1="{self.y0}" x2="{x:.2f}" y2="{self.y0 + self.h}" stroke="#ddd"/>')
            out.append(f'<text x="{x:.2f}" y="{self.y0 + self.h + 14}" font-size="10" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
        for t in _nice_ticks(*self.ylim):
            y = float(self.py(t))
            out.append(f'<line x1="{self.x0}" y1="{y:.2f}" x2="{self.x0 + self.w}" y2="{y:.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{self.x0 - 4}" y="{y + 3:.2f}" font-size="10" text-anchor="end">{_fmt(t)}</text>')
        out.append(f'<text x="{self.x0 + self.w / 2}" y="{self.y0 + self.h + 28}" font-size="11" '
                   f'text-anchor="middle">{escape(xlabel)}</text>')
        cx, cy = self.x0 - 36, self.y0 + self.h / 2
        out.append(f'<text x="{cx}" y="{cy}" font-size="11" text-anchor="middle" '
                   f'transform="rotate(-90 {cx} {cy})">{escape(ylabel)}</text>')
        return out

    def polyline(self, xs, ys, color: str, width: float = 1.5, dash: str | None = None) -> str:
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(self.px(xs), self.py(ys)))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'


def _document(width: int, height: int, body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>',
                      f'<text x="{width / 2}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>',
                      *body, "</svg>"]) + "\n"


def _limits(arrays, pad: float = 0.05) -> tuple[float, float]:
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays]) if arrays else np.zeros(1)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def _legend(labels, x: float, y: float, colors=None) -> list[str]:
    out = []
    for i, label in enumerate(labels):
        c = colors[i] if colors else PALETTE[i % len(PALETTE)]
        yy = y + 14 * i
        out.append(f'<line x1="{x}" y1="{yy}" x2="{x + 18}" y2="{yy}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{x + 22}" y="{yy + 4}" font-size="11">{escape(label)}</text>')
    return out


def traces_svg(series: dict, title: str = "Speed output") -> str:
    """Linear (top) and angular (bottom) velocity over time, one line per label.

    ``series`` maps a label to ``(t, v, w)`` arrays.
    """
    width, height = 720, 520
    ts = [np.asarray(s[0], dtype=float) for s in series.values()]
    xlim = _limits(ts, 0.0) if any(t.size for t in ts) else (0.0, 1.0)
    top = _Panel(70, 40, 600, 190, xlim, _limits([s[1] for s in series.values()]))
    bottom = _Panel(70, 285, 600, 190, xlim, _limits([s[2] for s in series.values()]))
    body = top.frame("time (s)", "v (m/s)") + bottom.frame("time (s)", "w (rad/s)")
    for i, (t, v, w) in enumerate(series.values()):
        c = PALETTE[i % len(PALETTE)]
        body.append(top.polyline(t, v, c))
        body.append(bottom.polyline(t, w, c))
    body += _legend(list(series), 560, 52)
    return _document(width, height, body, title)


def trajectory_svg(grid, trajectories: dict, global_path=None, start=None, goal=None,
                   title: str = "Trajectories") -> str:
    """Occupied cells of ``grid`` with the global path (dashed) and one line per trajectory.

    ``trajectories`` maps a label to an (N, 2) array of x, y.
    """
    w_m = grid.width * grid.resolution
    h_m = grid.height * grid.resolution
    scale = min(600 / w_m, 600 / h_m)
    pw, ph = w_m * scale, h_m * scale
    xlim = (grid.origin.x, grid.origin.x + w_m)
    ylim = (grid.origin.y, grid.origin.y + h_m)
    panel = _Panel(60, 35, pw, ph, xlim, ylim)
    body = panel.frame("x (m)", "y (m)")
    res = grid.resolution
    cell = res * scale
    occ = np.asarray(grid.occupied_mask(), dtype=bool)
    for r in range(occ.shape[0]):
        # one rectangle per horizontal run of occupied cells
        edges = np.diff(np.concatenate([[0], occ[r].astype(np.int8), [0]]))
        for c0, c1 in zip(np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]):
            x = float(panel.px(grid.origin.x + c0 * res))
            y = float(panel.py(grid.origin.y + (r + 1) * res))
            body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{(c1 - c0) * cell:.2f}" '
                        f'height="{cell:.2f}" fill="#555"/>')
    if global_path is not None and len(global_path):
        gp = np.asarray(global_path, dtype=float)
        body.append(panel.polyline(gp[:, 0], gp[:, 1], "#888", 1.5, "5,4"))
    for i, xy in enumerate(trajectories.values()):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        body.append(panel.polyline(xy[:, 0], xy[:, 1], PALETTE[i % len(PALETTE)], 2.0))
    for pose, color in ((start, "#2ca02c"), (goal, "#d62728")):
        if pose is not None:
            body.append(f'<circle cx="{float(panel.px(pose.x)):.2f}" cy="{float(panel.py(pose.y)):.2f}" '
                        f'r="5" fill="{color}"/>')
    labels = list(trajectories)
    colors = [PALETTE[i % len(PALETTE)] for i in range(len(labels))]
    if global_path is not None:
        labels.append("global path")
        colors.append("#888")
    body += _legend(labels, 60 + pw + 15, 50, colors)
    return _document(int(pw + 200), int(ph + 80), body, title)
