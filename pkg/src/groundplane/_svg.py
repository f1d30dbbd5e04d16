"""Tiny deterministic SVG plots (no timestamps, no random ids)."""

from __future__ import annotations

import math
from typing import Sequence

W, H, PAD = 480, 320, 40


def _scale(values: Sequence[float], lo_px: float, hi_px: float, log: bool = False):
    vals = [math.log10(max(v, 1e-300)) if log else v for v in values]
    lo, hi = min(vals), max(vals)
    span = hi - lo or 1.0
    return [lo_px + (v - lo) / span * (hi_px - lo_px) for v in vals], lo, hi


def _frame(title: str, xlabel: str, ylabel: str, body: list[str]) -> str:
    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="black"/>',
            f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle" font-size="14">{title}</text>',
            f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
            f'<text x="12" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 12 {H / 2})">{ylabel}</text>',
            *body,
            "</svg>",
            "",
        ]
    )


def line_plot(ys: Sequence[float], title: str, xlabel: str, ylabel: str, log: bool = False) -> str:
    if not ys:
        return _frame(title, xlabel, ylabel, [])
    xs_px, _, _ = _scale(list(range(len(ys))) if len(ys) > 1 else [0, 1], PAD, W - PAD)
    ys_px, lo, hi = _scale(ys, H - PAD, PAD, log)
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs_px, ys_px))
    fmt = (lambda v: f"1e{v:.1f}") if log else (lambda v: f"{v:.3g}")
    return _frame(
        title,
        xlabel,
        ylabel,
        [
            f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>',
            f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end" font-size="10">{fmt(hi)}</text>',
            f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end" font-size="10">{fmt(lo)}</text>',
        ],
    )


def scatter_plot(xs: Sequence[float], ys: Sequence[float], title: str, xlabel: str, ylabel: str) -> str:
    """Scatter on the unit square with the diagonal drawn for reference."""
    body = [
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{PAD}" stroke="gray" stroke-dasharray="4"/>'
    ]
    for x, y in zip(xs, ys):
        px = PAD + x * (W - 2 * PAD)
        py = H - PAD - y * (H - 2 * PAD)
        body.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="1.5" fill="steelblue" fill-opacity="0.4"/>')
    return _frame(title, xlabel, ylabel, body)
