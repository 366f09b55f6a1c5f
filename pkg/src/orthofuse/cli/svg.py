"""QQ and histogram diagnostics as CSV data plus minimal static SVG."""
from __future__ import annotations

import os
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import beta, norm

from ..errors import TooFewPoints
from .io import write_csv

__all__ = ["emit_svg_diagnostics", "hist_data", "qq_data", "render_hist_svg", "render_qq_svg"]

MIN_QQ_POINTS = 10
BAND_LEVEL = 0.99
W, H, PAD = 480, 360, 48


def qq_data(values, band: float = BAND_LEVEL) -> dict:
    """Normal QQ coordinates with pointwise order-statistic bands.

    The i-th of n sorted uniforms is Beta(i, n - i + 1); mapping its central
    ``band`` interval through the normal quantile gives the band around the
    i-th theoretical quantile.
    """
    z = np.sort(np.asarray(values, dtype=float).ravel())
    n = z.size
    if n < MIN_QQ_POINTS:
        raise TooFewPoints(f"QQ diagnostics need at least {MIN_QQ_POINTS} values, got {n}")
    i = np.arange(1, n + 1)
    a = (1 - band) / 2
    return {
        "theoretical": norm.ppf((i - 0.5) / n),
        "empirical": z,
        "lower": norm.ppf(beta.ppf(a, i, n - i + 1)),
        "upper": norm.ppf(beta.ppf(1 - a, i, n - i + 1)),
    }


def hist_data(values, bins: int = 20):
    counts, edges = np.histogram(np.asarray(values, dtype=float).ravel(), bins=bins)
    return edges, counts


def _num(v) -> str:
    return f"{v:.3f}"


def _frame(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
    ]


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def render_qq_svg(qq: dict, title: str = "Normal QQ plot") -> str:
    t, e, lo, hi = qq["theoretical"], qq["empirical"], qq["lower"], qq["upper"]
    both = np.concatenate([t, e, lo, hi])
    vmin, vmax = float(both.min()), float(both.max())
    sx = _scale(vmin, vmax, PAD, W - PAD)
    sy = _scale(vmin, vmax, H - PAD, PAD)
    out = _frame(title)
    band = " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(t, hi))
    band += " " + " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(t[::-1], lo[::-1]))
    out.append(f'<polygon points="{band}" fill="#cfe2f3" stroke="none"/>')
    out.append(
        f'<line x1="{_num(sx(vmin))}" y1="{_num(sy(vmin))}" x2="{_num(sx(vmax))}" y2="{_num(sy(vmax))}" stroke="gray"/>'
    )
    for a, b in zip(t, e):
        out.append(f'<circle cx="{_num(sx(a))}" cy="{_num(sy(b))}" r="2.5" fill="#1f4e79"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_hist_svg(edges, counts, title: str = "Histogram") -> str:
    sx = _scale(float(edges[0]), float(edges[-1]), PAD, W - PAD)
    top = max(int(counts.max()), 1)
    sy = _scale(0.0, float(top), H - PAD, PAD)
    out = _frame(title)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        if c == 0:
            continue
        x0, x1, y = sx(a), sx(b), sy(c)
        out.append(
            f'<rect x="{_num(x0)}" y="{_num(y)}" width="{_num(x1 - x0)}" height="{_num(H - PAD - y)}" '
            'fill="#7f9fbf" stroke="white"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit_svg_diagnostics(out_dir, estimates, standardized=None, bins: int = 20) -> list[str]:
    """Write hist.csv/hist.svg of ``estimates`` and, if given, qq.csv/qq.svg of ``standardized``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if standardized is not None:
        qq = qq_data(standardized)
        p = os.path.join(out_dir, "qq.csv")
        write_csv(p, ["theoretical", "empirical", "band_lower", "band_upper"], zip(*[qq[k] for k in ("theoretical", "empirical", "lower", "upper")]))
        paths.append(p)
        p = os.path.join(out_dir, "qq.svg")
        _write(p, render_qq_svg(qq, "Standardized estimates vs N(0,1)"))
        paths.append(p)
    edges, counts = hist_data(estimates, bins)
    p = os.path.join(out_dir, "hist.csv")
    write_csv(p, ["left", "right", "count"], zip(edges[:-1], edges[1:], counts))
    paths.append(p)
    p = os.path.join(out_dir, "hist.svg")
    _write(p, render_hist_svg(edges, counts, "Task estimates"))
    paths.append(p)
    return paths
