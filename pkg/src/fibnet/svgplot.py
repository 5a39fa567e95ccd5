"""Minimal deterministic SVG line charts for training curves.

Hand-rolled on purpose: the output is byte-stable across runs (no
timestamps or generated ids), trivially diffable, and each series is one
<polyline> whose point count equals its sample count.
"""
from __future__ import annotations

PANEL_W = 460
PANEL_H = 320
MARGIN = 52


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _panel(x0: int, title: str, xlabel: str, ylabel: str,
           series: list[tuple[str, str, list[float], list[float]]]) -> list[str]:
    left, right = x0 + MARGIN, x0 + PANEL_W - 16
    top, bottom = 34, PANEL_H - MARGIN
    xs_all = [x for _, _, xs, _ in series for x in xs]
    ys_all = [y for _, _, _, ys in series for y in ys]
    xmin, xmax = min(xs_all), max(xs_all)
    ymin, ymax = min(ys_all), max(ys_all)
    if xmax == xmin:
        xmax = xmin + 1
    if ymax == ymin:
        ymax = ymin + 1
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad

    def px(x):
        return left + (x - xmin) / (xmax - xmin) * (right - left)

    def py(y):
        return bottom - (y - ymin) / (ymax - ymin) * (bottom - top)

    out = [
        f'<text x="{x0 + PANEL_W // 2}" y="20" text-anchor="middle" '
        f'font-size="14" font-weight="bold">{title}</text>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="#444"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="#444"/>',
        f'<text x="{(left + right) // 2}" y="{PANEL_H - 14}" text-anchor="middle" '
        f'font-size="11">{xlabel}</text>',
        f'<text x="{x0 + 14}" y="{(top + bottom) // 2}" text-anchor="middle" '
        f'font-size="11" transform="rotate(-90 {x0 + 14} {(top + bottom) // 2})">'
        f'{ylabel}</text>',
        f'<text x="{left - 6}" y="{bottom + 4}" text-anchor="end" font-size="10">'
        f'{_fmt(ymin)}</text>',
        f'<text x="{left - 6}" y="{top + 4}" text-anchor="end" font-size="10">'
        f'{_fmt(ymax)}</text>',
    ]
    for si, (label, color, xs, ys) in enumerate(series):
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline data-label="{label}" fill="none" stroke="{color}" '
            f'stroke-width="1.5" points="{pts}"/>')
        lx = left + 8 + si * 110
        out.append(f'<line x1="{lx}" y1="{top + 8}" x2="{lx + 18}" y2="{top + 8}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 22}" y="{top + 12}" font-size="10">{label}</text>')
    return out


def render_curves(epochs: list[int],
                  acc_series: list[tuple[str, str, list[float]]],
                  loss_series: list[tuple[str, str, list[float]]]) -> str:
    """Two-panel SVG: accuracy and loss versus epoch."""
    xs = [float(e) for e in epochs]
    body = []
    body += _panel(0, "Accuracy", "epoch", "accuracy",
                   [(lbl, col, xs, ys) for lbl, col, ys in acc_series])
    body += _panel(PANEL_W, "Loss", "epoch", "loss",
                   [(lbl, col, xs, ys) for lbl, col, ys in loss_series])
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * PANEL_W}" '
        f'height="{PANEL_H}" font-family="sans-serif">\n'
        + "\n".join(body) + "\n</svg>\n"
    )
