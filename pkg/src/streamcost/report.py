"""Report artifacts: CSV tables, a JSON manifest and small SVG charts.

The SVG is written by hand so the bytes depend only on the data (plotting
libraries embed dates and ids).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence
from xml.sax.saxutils import escape

SUMMARY_COLUMNS = ("suite", "group", "metric", "median", "p95", "count")
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52")


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def csv_text(rows: Iterable[dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_text(path, text: str) -> None:
    """Write via a temporary sibling so a crash never leaves half a file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    tmp.write_text(text)
    tmp.replace(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def manifest_text(doc: dict[str, Any]) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# SVG


_W, _H = 640, 360
_LEFT, _RIGHT, _TOP, _BOTTOM = 64, 16, 40, 72


def _header(title: str, desc: str = "") -> list[str]:
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<title>{escape(title)}</title>']
    if desc:
        out.append(f"<desc>{escape(desc)}</desc>")
    out += [f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']
    return out


def _y_axis(lo: float, hi: float, log: bool, label: str) -> tuple[list[str], Any]:
    plot_h = _H - _TOP - _BOTTOM
    f = (lambda v: math.log10(v)) if log else (lambda v: v)
    a, b = f(lo), f(hi)
    if b <= a:
        b = a + 1.0

    def y(v):
        return _TOP + plot_h * (1.0 - (f(v) - a) / (b - a))

    out = [f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_H - _BOTTOM}" stroke="black"/>',
           f'<line x1="{_LEFT}" y1="{_H - _BOTTOM}" x2="{_W - _RIGHT}" y2="{_H - _BOTTOM}" '
           f'stroke="black"/>',
           f'<text x="14" y="{_TOP + plot_h / 2}" transform="rotate(-90 14 {_TOP + plot_h / 2})" '
           f'text-anchor="middle">{escape(label)}</text>']
    ticks = _ticks(lo, hi, log)
    for t in ticks:
        yy = y(t)
        out.append(f'<line x1="{_LEFT - 4}" y1="{yy:.1f}" x2="{_LEFT}" y2="{yy:.1f}" stroke="black"/>')
        out.append(f'<text x="{_LEFT - 6}" y="{yy + 4:.1f}" text-anchor="end">{t:g}</text>')
    return out, y


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [10.0 ** k for k in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)
                if lo <= 10.0 ** k <= hi] or [lo, hi]
    step = (hi - lo) / 4 if hi > lo else 1.0
    return [lo + i * step for i in range(5)]


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    for i, name in enumerate(names):
        x = _LEFT + 8 + i * 130
        out.append(f'<rect x="{x}" y="{_H - 22}" width="10" height="10" '
                   f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        out.append(f'<text x="{x + 14}" y="{_H - 13}">{escape(name)}</text>')
    return out


def bar_chart(title: str, categories: Sequence[str], series: dict[str, Sequence[float]],
              ylabel: str, log: bool = False, desc: str = "") -> str:
    values = [v for vs in series.values() for v in vs]
    lo = min(1.0, min(values)) if log else 0.0
    hi = max(values) * (1.5 if log else 1.1) if values else 1.0
    out = _header(title, desc)
    axis, y = _y_axis(lo, hi, log, ylabel)
    out += axis
    plot_w = _W - _LEFT - _RIGHT
    slot = plot_w / max(len(categories), 1)
    bw = slot * 0.8 / max(len(series), 1)
    for ci, cat in enumerate(categories):
        x0 = _LEFT + ci * slot + slot * 0.1
        for si, (name, vs) in enumerate(series.items()):
            v = vs[ci]
            top = y(v)
            out.append(f'<rect x="{x0 + si * bw:.1f}" y="{top:.1f}" width="{bw:.1f}" '
                       f'height="{max(_H - _BOTTOM - top, 0):.1f}" '
                       f'fill="{PALETTE[si % len(PALETTE)]}"><title>{escape(name)}: {v:.4g}'
                       f'</title></rect>')
        cx = _LEFT + (ci + 0.5) * slot
        out.append(f'<text x="{cx:.1f}" y="{_H - _BOTTOM + 14}" text-anchor="middle">'
                   f'{escape(str(cat))}</text>')
    out += _legend(list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(title: str, xs: Sequence[float], series: dict[str, Sequence[float]],
               xlabel: str, ylabel: str, shade: Optional[tuple[float, float]] = None,
               log: bool = True, desc: str = "") -> str:
    """Lines over numeric ``xs``; ``shade`` greys out an x interval (the training range)."""
    values = [v for vs in series.values() for v in vs]
    lo = min(1.0, min(values)) if values else 1.0
    hi = max(values) * 1.5 if values else 10.0
    out = _header(title, desc)
    axis, y = _y_axis(lo, hi, log, ylabel)
    plot_w = _W - _LEFT - _RIGHT
    x_lo = min(list(xs) + ([shade[0]] if shade else []))
    x_hi = max(list(xs) + ([shade[1]] if shade else []))
    span = (x_hi - x_lo) or 1.0

    def x(v):
        return _LEFT + 16 + (plot_w - 32) * (v - x_lo) / span

    if shade:
        out.append(f'<rect x="{x(shade[0]):.1f}" y="{_TOP}" width="{x(shade[1]) - x(shade[0]):.1f}" '
                   f'height="{_H - _TOP - _BOTTOM}" fill="#dddddd"/>')
    out += axis
    for v in xs:
        out.append(f'<text x="{x(v):.1f}" y="{_H - _BOTTOM + 14}" text-anchor="middle">{v:g}</text>')
    out.append(f'<text x="{_LEFT + plot_w / 2}" y="{_H - _BOTTOM + 32}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    for si, (name, vs) in enumerate(series.items()):
        color = PALETTE[si % len(PALETTE)]
        pts = " ".join(f"{x(a):.1f},{y(b):.1f}" for a, b in zip(xs, vs))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for a, b in zip(xs, vs):
            out.append(f'<circle cx="{x(a):.1f}" cy="{y(b):.1f}" r="3" fill="{color}"/>')
    out += _legend(list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"
