"""Small deterministic SVG plots (no timestamps, no external assets)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

W, H = 720, 360
ML, MR, MT, MB = 70, 20, 30, 45


def _f(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _range(v: np.ndarray, pad: float = 0.05) -> tuple[float, float]:
    v = v[np.isfinite(v)]
    if v.size == 0:
        return -1.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-300:
        d = abs(lo) * 0.1 or 1.0
        return lo - d, hi + d
    d = (hi - lo) * pad
    return lo - d, hi + d


class Axes:
    """One plotting panel mapping data coordinates into a pixel box."""

    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x, dtype=float) - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y, dtype=float) - lo) / (hi - lo) * self.h

    def frame(self, xlabel: str, ylabel: str, title: str = "") -> list[str]:
        out = [f'<rect x="{_f(self.x0)}" y="{_f(self.y0)}" width="{_f(self.w)}" height="{_f(self.h)}" '
               'fill="none" stroke="#444"/>']
        for t in _ticks(*self.xlim):
            x = float(self.px(t))
            out.append(f'<line x1="{_f(x)}" y1="{_f(self.y0 + self.h)}" x2="{_f(x)}" '
                       f'y2="{_f(self.y0 + self.h + 4)}" stroke="#444"/>')
            out.append(f'<text x="{_f(x)}" y="{_f(self.y0 + self.h + 16)}" text-anchor="middle">{t:.4g}</text>')
        for t in _ticks(*self.ylim):
            y = float(self.py(t))
            out.append(f'<line x1="{_f(self.x0 - 4)}" y1="{_f(y)}" x2="{_f(self.x0)}" y2="{_f(y)}" stroke="#444"/>')
            out.append(f'<text x="{_f(self.x0 - 6)}" y="{_f(y + 4)}" text-anchor="end">{t:.3g}</text>')
        cx = self.x0 + self.w / 2
        out.append(f'<text x="{_f(cx)}" y="{_f(self.y0 + self.h + 34)}" text-anchor="middle">{escape(xlabel)}</text>')
        cy = self.y0 + self.h / 2
        out.append(f'<text x="{_f(self.x0 - 55)}" y="{_f(cy)}" text-anchor="middle" '
                   f'transform="rotate(-90 {_f(self.x0 - 55)} {_f(cy)})">{escape(ylabel)}</text>')
        if title:
            out.append(f'<text x="{_f(cx)}" y="{_f(self.y0 - 10)}" text-anchor="middle">{escape(title)}</text>')
        return out


def _doc(body: list[str], width=W, height=H) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>'] + body + ["</svg>"]) + "\n"


def _decimate(x: np.ndarray, y: np.ndarray, max_points: int = 2000):
    """Min/max decimation that keeps peaks visible."""
    n = x.size
    if n <= max_points:
        return x, y
    k = int(math.ceil(n / (max_points // 2)))
    xs, ys = [], []
    for i in range(0, n, k):
        seg = y[i:i + k]
        a, b = int(np.argmin(seg)), int(np.argmax(seg))
        for j in sorted({a, b}):
            xs.append(x[i + j])
            ys.append(seg[j])
    return np.array(xs), np.array(ys)


def line_plot(x, y, xlabel: str, ylabel: str, title: str = "") -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax = Axes(ML, MT, W - ML - MR, H - MT - MB, _range(x, 0.0), _range(y))
    xd, yd = _decimate(x, y)
    pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(ax.px(xd), ax.py(yd)))
    body = ax.frame(xlabel, ylabel, title)
    if ax.ylim[0] < 0 < ax.ylim[1]:
        y0 = float(ax.py(0.0))
        body.append(f'<line x1="{_f(ax.x0)}" y1="{_f(y0)}" x2="{_f(ax.x0 + ax.w)}" y2="{_f(y0)}" '
                    'stroke="#bbb" stroke-dasharray="4 3"/>')
    body.append(f'<polyline class="trace" fill="none" stroke="#1f5fa8" stroke-width="1" points="{pts}"/>')
    return _doc(body)


def stem_plot(values, xlabel: str, ylabel: str, title: str = "") -> str:
    """One ``<g class="stem">`` per value; NaN values are drawn as hollow markers at 0."""
    v = np.asarray(values, dtype=float)
    idx = np.arange(v.size, dtype=float)
    finite = np.where(np.isfinite(v), v, 0.0)
    lo, hi = _range(np.append(finite, 0.0))
    ax = Axes(ML, MT, W - ML - MR, H - MT - MB, (-0.5, max(v.size - 0.5, 0.5)), (lo, hi))
    body = ax.frame(xlabel, ylabel, title)
    y0 = float(ax.py(0.0))
    body.append(f'<line x1="{_f(ax.x0)}" y1="{_f(y0)}" x2="{_f(ax.x0 + ax.w)}" y2="{_f(y0)}" stroke="#888"/>')
    for i, val in enumerate(v):
        x = float(ax.px(idx[i]))
        if math.isfinite(val):
            y = float(ax.py(val))
            color = "#1f5fa8" if val > 0 else "#c0392b"
            body.append(f'<g class="stem"><line x1="{_f(x)}" y1="{_f(y0)}" x2="{_f(x)}" y2="{_f(y)}" '
                        f'stroke="{color}"/><circle cx="{_f(x)}" cy="{_f(y)}" r="2.5" fill="{color}"/></g>')
        else:
            body.append(f'<g class="stem"><circle cx="{_f(x)}" cy="{_f(y0)}" r="2.5" fill="none" stroke="#c0392b"/></g>')
    return _doc(body)


def histograms(panels: list[tuple[np.ndarray, str]], bins: int = 20, title: str = "") -> str:
    """Side-by-side histograms; ``panels`` holds ``(samples, label)`` pairs."""
    n = len(panels)
    pw = (W - n * (ML + MR)) / n
    body = []
    for k, (samples, label) in enumerate(panels):
        s = np.asarray(samples, dtype=float)
        s = s[np.isfinite(s)]
        lo, hi = _range(s, 0.0)
        counts, edges = np.histogram(s, bins=bins, range=(lo, hi))
        ax = Axes(ML + k * (pw + ML + MR), MT, pw, H - MT - MB, (lo, hi), (0.0, max(1, counts.max()) * 1.05))
        body += ax.frame(label, "count", title if k == 0 and n == 1 else "")
        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            if c == 0:
                continue
            x1, x2 = float(ax.px(a)), float(ax.px(b))
            y = float(ax.py(c))
            body.append(f'<rect class="bar" x="{_f(x1)}" y="{_f(y)}" width="{_f(x2 - x1)}" '
                        f'height="{_f(ax.y0 + ax.h - y)}" fill="#7fa7d6" stroke="#1f5fa8"/>')
    if title and n > 1:
        body.append(f'<text x="{W / 2:.2f}" y="14" text-anchor="middle">{escape(title)}</text>')
    return _doc(body)
