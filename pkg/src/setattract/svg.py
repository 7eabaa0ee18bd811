"""Minimal deterministic SVG writer for polygons, polylines and point fields."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


def _num(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class Canvas:
    """Maps a data-space box onto a fixed pixel viewport (y axis pointing up)."""

    def __init__(self, lower, upper, width: int = 640, height: int = 480, margin: int = 40):
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        self.lo, self.span = lo, span
        self.width, self.height, self.margin = width, height, margin
        self.items: list[str] = []

    def _xy(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u = (pts - self.lo) / self.span
        x = self.margin + u[:, 0] * (self.width - 2 * self.margin)
        y = self.height - self.margin - u[:, 1] * (self.height - 2 * self.margin)
        return np.column_stack([x, y])

    def _points_attr(self, pts) -> str:
        return " ".join(f"{_num(x)},{_num(y)}" for x, y in self._xy(pts))

    def polygon(self, pts, fill: str = "none", stroke: str = "none", opacity: float = 1.0, width: float = 1.0):
        self.items.append(f'<polygon points="{self._points_attr(pts)}" fill="{fill}" fill-opacity="{_num(opacity)}" '
                          f'stroke="{stroke}" stroke-width="{_num(width)}"/>')

    def polyline(self, pts, stroke: str = "black", width: float = 1.0, opacity: float = 1.0):
        self.items.append(f'<polyline points="{self._points_attr(pts)}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{_num(width)}" stroke-opacity="{_num(opacity)}"/>')

    def points(self, pts, fill: str = "black", r: float = 1.5):
        for x, y in self._xy(pts):
            self.items.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{_num(r)}" fill="{fill}"/>')

    def text(self, x: float, y: float, label: str, size: int = 12):
        self.items.append(f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" font-family="sans-serif">'
                          f'{escape(label)}</text>')

    def frame(self, title: str = ""):
        """Axis box with the data range printed at the corners."""
        m, w, h = self.margin, self.width, self.height
        self.items.append(f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
                          'fill="none" stroke="#444" stroke-width="0.5"/>')
        hi = self.lo + self.span
        self.text(m, h - m + 16, f"{self.lo[0]:.4g}", 10)
        self.text(w - m - 30, h - m + 16, f"{hi[0]:.4g}", 10)
        self.text(4, h - m, f"{self.lo[1]:.4g}", 10)
        self.text(4, m + 10, f"{hi[1]:.4g}", 10)
        if title:
            self.text(m, m - 12, title, 14)

    def to_string(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        body = "\n".join(self.items)
        return f'<?xml version="1.0" encoding="UTF-8"?>\n{head}\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_string())
        return path
