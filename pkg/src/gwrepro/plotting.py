"""Standalone SVG rendering of the foreground/background histogram."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .coinc import HistogramData, far_of, significance

WIDTH, HEIGHT = 720, 480
LEFT, RIGHT, TOP, BOTTOM = 80, 30, 70, 60


def _sigma_at(stat, background_stats, background_time_s, foreground_time_s):
    far, _ = far_of(stat, background_stats, background_time_s)
    return significance(far, foreground_time_s)[1]


def render_histogram_svg(hist: HistogramData, results=None) -> str:
    """Log-y histogram: background per trial as a step line, foreground as markers.

    With ``results`` (a parsed results file) the top axis shows the Gaussian
    significance a single event at that statistic would have against the
    background, and the loudest event is labelled.
    """
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    edges = hist.edges if hist.bins else np.array([0.0, hist.bin_width])
    x0, x1 = float(edges[0]), float(edges[-1])
    positive = [v for _, fg, bg in hist.bins for v in (fg, bg) if v > 0]
    y_lo = 10 ** math.floor(math.log10(min(positive))) if positive else 1e-3
    y_hi = 10 ** math.ceil(math.log10(max(positive)) + 1e-9) if positive else 1.0
    if y_hi <= y_lo:
        y_hi = y_lo * 10

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        y = max(y, y_lo)
        return TOP + ph - (math.log10(y) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]

    # bottom axis: statistic
    for x in np.linspace(x0, x1, 6):
        out.append(f'<line x1="{sx(x):.2f}" y1="{TOP + ph}" x2="{sx(x):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(x):.2f}" y="{TOP + ph + 18}" text-anchor="middle">{x:.1f}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle">'
               'Detection statistic (combined reweighted SNR)</text>')

    # left axis: log counts
    for k in range(round(math.log10(y_lo)), round(math.log10(y_hi)) + 1):
        y = sy(10.0 ** k)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">1e{k}</text>')
    out.append(f'<text x="20" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 20 {TOP + ph / 2})">Number of events</text>')

    # top axis: sigma from the background
    if results is not None and results.background_time_s > 0:
        bg = results.background_stats()
        for x in np.linspace(x0, x1, 6):
            s = _sigma_at(x, bg, results.background_time_s, results.foreground_time_s)
            out.append(f'<line x1="{sx(x):.2f}" y1="{TOP - 5}" x2="{sx(x):.2f}" y2="{TOP}" stroke="black"/>')
            out.append(f'<text class="sigma-tick" x="{sx(x):.2f}" y="{TOP - 9}" text-anchor="middle">'
                       f'{s:.1f}σ</text>')
        out.append(f'<text x="{LEFT + pw / 2}" y="{TOP - 30}" text-anchor="middle">Significance</text>')

    # background step line
    pts = []
    for (left, _, bg), right in zip(hist.bins, edges[1:]):
        if bg > 0:
            pts.append(f"M{sx(left):.2f},{sy(bg):.2f} H{sx(right):.2f}")
    if pts:
        out.append(f'<path class="bg-step" d="{" ".join(pts)}" fill="none" stroke="#1f77b4" stroke-width="2"/>')

    # foreground markers
    for left, fg, _ in hist.bins:
        if fg > 0:
            cx = sx(left + hist.bin_width / 2)
            out.append(f'<circle class="fg-marker" cx="{cx:.2f}" cy="{sy(fg):.2f}" r="4" fill="#d62728"/>')

    if hist.loudest is not None:
        x = sx(min(max(hist.loudest.combined_stat, x0), x1))
        label = escape(hist.loudest.sigma_text())
        out.append(f'<text class="loudest" x="{x:.2f}" y="{TOP + 16}" text-anchor="end">{label}</text>')

    out.append(f'<text x="{WIDTH - RIGHT - 150}" y="{TOP + ph - 30}" fill="#1f77b4">background per trial</text>')
    out.append(f'<text x="{WIDTH - RIGHT - 150}" y="{TOP + ph - 14}" fill="#d62728">foreground</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
