"""Plain-markup SVG renderers for the CLI's optional plot output.

Every renderer returns a complete SVG document as a string. There is no
plotting dependency on purpose: the charts are simple enough (bars, dots,
one polyline) that direct markup stays legible, and the CSV plot data is
always written alongside, so these are conveniences rather than the record.
"""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

W, H = 640, 400
MARGIN = dict(left=150, right=30, top=40, bottom=45)


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _doc(body: List[str], title: str) -> str:
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{_esc(title)}</text>']
    return "\n".join(head + body + ["</svg>"])


def _xscale(lo: float, hi: float):
    if hi <= lo:
        hi = lo + 1.0
    span = W - MARGIN["left"] - MARGIN["right"]

    def to_px(v: float) -> float:
        return MARGIN["left"] + (v - lo) / (hi - lo) * span

    return to_px


def _axis_ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _x_axis(body: List[str], lo: float, hi: float, label: str) -> None:
    to_px = _xscale(lo, hi)
    y = H - MARGIN["bottom"]
    body.append(f'<line x1="{MARGIN["left"]}" y1="{y}" x2="{W - MARGIN["right"]}" '
                f'y2="{y}" stroke="black"/>')
    for t in _axis_ticks(lo, hi):
        px = to_px(t)
        body.append(f'<line x1="{px:.1f}" y1="{y}" x2="{px:.1f}" y2="{y + 4}" stroke="black"/>')
        body.append(f'<text x="{px:.1f}" y="{y + 17}" text-anchor="middle">{t:.3g}</text>')
    body.append(f'<text x="{(MARGIN["left"] + W - MARGIN["right"]) / 2}" y="{H - 8}" '
                f'text-anchor="middle">{_esc(label)}</text>')


def waterfall(feature_names: Sequence[str], contributions: Sequence[float],
              base_value: float, prediction: float) -> str:
    """Signed contribution bars walking from the base value to the prediction."""
    order = sorted(range(len(contributions)), key=lambda j: -abs(contributions[j]))
    names = [feature_names[j] for j in order]
    contribs = [contributions[j] for j in order]
    levels = [base_value]
    for c in contribs:
        levels.append(levels[-1] + c)
    lo = min(levels)
    hi = max(levels)
    pad = 0.05 * (hi - lo or 1.0)
    to_px = _xscale(lo - pad, hi + pad)
    rows = len(contribs)
    row_h = (H - MARGIN["top"] - MARGIN["bottom"]) / max(rows, 1)
    bar_h = min(22.0, row_h * 0.7)
    body: List[str] = []
    for i, (name, c) in enumerate(zip(names, contribs)):
        y = MARGIN["top"] + i * row_h + (row_h - bar_h) / 2
        x0, x1 = to_px(levels[i]), to_px(levels[i + 1])
        color = "#c23b22" if c < 0 else "#2b6cb0"
        body.append(f'<rect x="{min(x0, x1):.1f}" y="{y:.1f}" '
                    f'width="{max(abs(x1 - x0), 1.0):.1f}" height="{bar_h:.1f}" fill="{color}"/>')
        body.append(f'<text x="{MARGIN["left"] - 6}" y="{y + bar_h / 2 + 4:.1f}" '
                    f'text-anchor="end">{_esc(name)}</text>')
        body.append(f'<text x="{max(x0, x1) + 4:.1f}" y="{y + bar_h / 2 + 4:.1f}">{c:+.3g}</text>')
    for v, label in ((base_value, "base"), (prediction, "estimate")):
        px = to_px(v)
        body.append(f'<line x1="{px:.1f}" y1="{MARGIN["top"] - 8}" x2="{px:.1f}" '
                    f'y2="{H - MARGIN["bottom"]}" stroke="#555" stroke-dasharray="4 3"/>')
        body.append(f'<text x="{px:.1f}" y="{MARGIN["top"] - 12}" '
                    f'text-anchor="middle">{label} {v:.3g}</text>')
    _x_axis(body, lo - pad, hi + pad, "effect estimate")
    return _doc(body, "effect decomposition")


def beeswarm(features: Sequence[str],
             rows: Sequence[Tuple[str, int, float, float]]) -> str:
    """One dot per (explanation, feature): x = contribution, shade = value.

    `rows` is the long-form table (feature, explanation index, feature
    value, contribution); features gives the display order top to bottom.
    """
    contribs = [r[3] for r in rows] or [0.0]
    lo, hi = min(contribs), max(contribs)
    pad = 0.05 * (hi - lo or 1.0)
    to_px = _xscale(lo - pad, hi + pad)
    by_feature = {f: [] for f in features}
    for f, _i, value, contribution in rows:
        if f in by_feature:
            by_feature[f].append((value, contribution))
    row_h = (H - MARGIN["top"] - MARGIN["bottom"]) / max(len(features), 1)
    body: List[str] = []
    for i, f in enumerate(features):
        yc = MARGIN["top"] + (i + 0.5) * row_h
        body.append(f'<text x="{MARGIN["left"] - 6}" y="{yc + 4:.1f}" '
                    f'text-anchor="end">{_esc(f)}</text>')
        body.append(f'<line x1="{MARGIN["left"]}" y1="{yc:.1f}" x2="{W - MARGIN["right"]}" '
                    f'y2="{yc:.1f}" stroke="#ddd"/>')
        pts = by_feature[f]
        if not pts:
            continue
        vlo = min(v for v, _ in pts)
        vhi = max(v for v, _ in pts)
        for k, (value, contribution) in enumerate(pts):
            frac = 0.5 if vhi <= vlo else (value - vlo) / (vhi - vlo)
            # low feature values render light blue, high ones dark red
            r = int(40 + 180 * frac)
            b = int(220 - 180 * frac)
            jitter = (k % 7 - 3) * row_h * 0.09
            body.append(f'<circle cx="{to_px(contribution):.1f}" cy="{yc + jitter:.1f}" '
                        f'r="3" fill="rgb({r},60,{b})" fill-opacity="0.75"/>')
    zero = to_px(0.0)
    body.append(f'<line x1="{zero:.1f}" y1="{MARGIN["top"]}" x2="{zero:.1f}" '
                f'y2="{H - MARGIN["bottom"]}" stroke="#888" stroke-dasharray="4 3"/>')
    _x_axis(body, lo - pad, hi + pad, "contribution to effect estimate")
    return _doc(body, "per-feature contributions across rows")


def rashomon(points: Sequence[Tuple[str, int, float]], baseline_loss: float) -> str:
    """Relative loss against ensemble size on a log-size axis.

    points are (label, ensemble size, relative loss); the distilled point is
    drawn as a distinct marker at its size.
    """
    ensemble = [(lbl, s, v) for lbl, s, v in points if lbl != "distilled"]
    distilled = [(lbl, s, v) for lbl, s, v in points if lbl == "distilled"]
    sizes = [s for _, s, _ in ensemble] or [1]
    losses = [v for _, _, v in points] or [0.0]
    xlo, xhi = math.log10(min(sizes)), math.log10(max(sizes))
    ylo, yhi = min(losses + [0.0]), max(losses + [0.0])
    ypad = 0.08 * (yhi - ylo or 1.0)
    ylo, yhi = ylo - ypad, yhi + ypad
    to_px = _xscale(xlo, xhi)
    yspan = H - MARGIN["top"] - MARGIN["bottom"]

    def to_py(v: float) -> float:
        return H - MARGIN["bottom"] - (v - ylo) / (yhi - ylo) * yspan

    body: List[str] = []
    for t in _axis_ticks(ylo, yhi):
        py = to_py(t)
        body.append(f'<line x1="{MARGIN["left"] - 4}" y1="{py:.1f}" x2="{MARGIN["left"]}" '
                    f'y2="{py:.1f}" stroke="black"/>')
        body.append(f'<text x="{MARGIN["left"] - 8}" y="{py + 4:.1f}" '
                    f'text-anchor="end">{t:.3g}</text>')
    body.append(f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" x2="{MARGIN["left"]}" '
                f'y2="{H - MARGIN["bottom"]}" stroke="black"/>')
    path = " ".join(f'{to_px(math.log10(s)):.1f},{to_py(v):.1f}' for _, s, v in ensemble)
    if len(ensemble) > 1:
        body.append(f'<polyline points="{path}" fill="none" stroke="#2b6cb0" stroke-width="2"/>')
    for _, s, v in ensemble:
        body.append(f'<circle cx="{to_px(math.log10(s)):.1f}" cy="{to_py(v):.1f}" '
                    f'r="4" fill="#2b6cb0"/>')
    for _, s, v in distilled:
        px, py = to_px(math.log10(s)), to_py(v)
        body.append(f'<rect x="{px - 5:.1f}" y="{py - 5:.1f}" width="10" height="10" '
                    f'fill="#c23b22"/>')
        body.append(f'<text x="{px + 8:.1f}" y="{py - 8:.1f}">distilled</text>')
    zero = to_py(0.0)
    body.append(f'<line x1="{MARGIN["left"]}" y1="{zero:.1f}" x2="{W - MARGIN["right"]}" '
                f'y2="{zero:.1f}" stroke="#888" stroke-dasharray="4 3"/>')
    body.append(f'<text x="{W - MARGIN["right"]}" y="{zero - 6:.1f}" text-anchor="end" '
                f'fill="#555">baseline loss {baseline_loss:.4g}</text>')
    _x_axis(body, xlo, xhi, "ensemble size (log10)")
    return _doc(body, "accuracy cost of smaller ensembles")


def profile(bins: Sequence[Tuple[str, int, float]], title: str) -> str:
    """Mean score per decile bin as vertical bars; empty bins are skipped."""
    means = [m for _, c, m in bins if c > 0]
    if not means:
        means = [0.0]
    ylo = min(means + [0.0])
    yhi = max(means + [0.0])
    ypad = 0.08 * (yhi - ylo or 1.0)
    ylo, yhi = ylo - ypad, yhi + ypad
    yspan = H - MARGIN["top"] - MARGIN["bottom"]

    def to_py(v: float) -> float:
        return H - MARGIN["bottom"] - (v - ylo) / (yhi - ylo) * yspan

    span = W - MARGIN["left"] - MARGIN["right"]
    bar_w = span / max(len(bins), 1)
    body: List[str] = []
    for t in _axis_ticks(ylo, yhi):
        py = to_py(t)
        body.append(f'<text x="{MARGIN["left"] - 8}" y="{py + 4:.1f}" '
                    f'text-anchor="end">{t:.3g}</text>')
    zero = to_py(0.0)
    for i, (label, count, mean) in enumerate(bins):
        xc = MARGIN["left"] + (i + 0.5) * bar_w
        body.append(f'<text x="{xc:.1f}" y="{H - MARGIN["bottom"] + 17}" '
                    f'text-anchor="middle">{_esc(label)}</text>')
        if count == 0:
            continue
        py = to_py(mean)
        top, height = (py, zero - py) if mean >= 0 else (zero, py - zero)
        body.append(f'<rect x="{xc - bar_w * 0.35:.1f}" y="{top:.1f}" '
                    f'width="{bar_w * 0.7:.1f}" height="{max(height, 1.0):.1f}" fill="#2b6cb0"/>')
    body.append(f'<line x1="{MARGIN["left"]}" y1="{zero:.1f}" x2="{W - MARGIN["right"]}" '
                f'y2="{zero:.1f}" stroke="black"/>')
    body.append(f'<text x="{(MARGIN["left"] + W - MARGIN["right"]) / 2}" y="{H - 8}" '
                f'text-anchor="middle">decile of the unshuffled variable</text>')
    return _doc(body, title)
