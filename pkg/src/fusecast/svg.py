"""Minimal static SVG charts: line plots, signed bars, box plots, and the
four-panel influence layout. No plotting dependency; every function returns
an SVG document string."""

from __future__ import annotations

import numpy as np

_FONT = 'font-family="Helvetica, Arial, sans-serif"'


class _Panel:
    """Maps data coordinates into one rectangular region of the canvas."""

    def __init__(self, x0, y0, width, height, xlim, ylim):
        self.x0, self.y0 = x0, y0
        self.width, self.height = width, height
        self.xmin, self.xmax = xlim
        self.ymin, self.ymax = ylim
        if self.xmax == self.xmin:
            self.xmax = self.xmin + 1.0
        if self.ymax == self.ymin:
            self.ymax = self.ymin + 1.0

    def px(self, x):
        return self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.width

    def py(self, y):
        return self.y0 + self.height - (y - self.ymin) / (self.ymax - self.ymin) * self.height

    def frame(self, title=""):
        parts = [
            f'<rect x="{self.x0}" y="{self.y0}" width="{self.width}" height="{self.height}" '
            'fill="white" stroke="#888" stroke-width="1"/>'
        ]
        if title:
            parts.append(
                f'<text x="{self.x0 + self.width / 2:.1f}" y="{self.y0 - 6:.1f}" '
                f'text-anchor="middle" font-size="12" {_FONT}>{title}</text>'
            )
        return parts

    def polyline(self, xs, ys, color="#1f77b4", width=1.5, dash=""):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="{width}"{dash_attr}/>')

    def dots(self, xs, ys, color="#333", r=2.0):
        return "".join(
            f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" r="{r}" fill="{color}"/>'
            for x, y in zip(xs, ys)
        )

    def bars(self, xs, ys, colors, half_width):
        out = []
        y0 = self.py(max(self.ymin, min(0.0, self.ymax)))
        for x, y, color in zip(xs, ys, colors):
            top = min(self.py(y), y0)
            h = abs(self.py(y) - y0)
            out.append(
                f'<rect x="{self.px(x) - half_width:.2f}" y="{top:.2f}" '
                f'width="{2 * half_width:.2f}" height="{max(h, 0.5):.2f}" fill="{color}"/>'
            )
        return "".join(out)


def _document(width, height, body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def _limits(values, pad=0.05):
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    span = (hi - lo) or 1.0
    return lo - pad * span, hi + pad * span


def line_chart(series, title="", width=640, height=320, xlabel="", ylabel=""):
    """``series`` is a list of (label, xs, ys, color, dash) tuples."""
    all_x = np.concatenate([np.asarray(s[1], dtype=np.float64) for s in series])
    all_y = np.concatenate([np.asarray(s[2], dtype=np.float64) for s in series])
    panel = _Panel(55, 30, width - 75, height - 70, _limits(all_x, 0.0), _limits(all_y))
    body = panel.frame(title)
    for label, xs, ys, color, dash in series:
        body.append(panel.polyline(xs, ys, color=color, dash=dash))
    legend_y = 42
    for label, _, _, color, _ in series:
        if not label:
            continue
        body.append(f'<rect x="{width - 150}" y="{legend_y - 8}" width="14" height="3" fill="{color}"/>')
        body.append(f'<text x="{width - 132}" y="{legend_y - 4}" font-size="10" {_FONT}>{label}</text>')
        legend_y += 14
    if xlabel:
        body.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" '
                    f'font-size="11" {_FONT}>{xlabel}</text>')
    if ylabel:
        body.append(f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="11" '
                    f'{_FONT} transform="rotate(-90 14 {height / 2:.0f})">{ylabel}</text>')
    return _document(width, height, body)


def tuning_chart(objectives, incumbent, title="Objective per trial", width=640, height=320):
    """Per-trial objective dots plus the best-so-far line."""
    xs = np.arange(1, len(objectives) + 1)
    finite = np.asarray(objectives, dtype=np.float64)
    finite = finite[np.isfinite(finite)]
    lim = _limits(finite if len(finite) else [0.0, 1.0])
    panel = _Panel(55, 30, width - 75, height - 70, (0.5, len(objectives) + 0.5), lim)
    body = panel.frame(title)
    body.append(panel.polyline(xs, np.minimum(incumbent, lim[1]), color="#1f77b4", width=2))
    keep = np.isfinite(np.asarray(objectives, dtype=np.float64))
    body.append(panel.dots(xs[keep], np.asarray(objectives)[keep], color="#d62728", r=2.5))
    body.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" '
                f'font-size="11" {_FONT}>trial</text>')
    return _document(width, height, body)


def box_stats(values):
    """Five-number box summary with the 1.5*IQR whisker rule: returns
    (q1, median, q3, lo_fence, hi_fence, whisker_lo, whisker_hi, outliers)
    where the fences are Q1 - 1.5*IQR and Q3 + 1.5*IQR, whiskers are the
    extreme data points inside the fences, and outliers lie beyond them."""
    vals = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(vals, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = vals[(vals >= lo_fence) & (vals <= hi_fence)]
    whisk_lo = float(inside.min()) if len(inside) else float(q1)
    whisk_hi = float(inside.max()) if len(inside) else float(q3)
    outliers = vals[(vals < lo_fence) | (vals > hi_fence)]
    return (float(q1), float(med), float(q3), float(lo_fence), float(hi_fence),
            whisk_lo, whisk_hi, outliers)


def box_plot(groups, title="", width=640, height=340):
    """Box plot per labelled group: median line in red, IQR box in pink,
    whiskers at Q1 - 1.5 IQR and Q3 + 1.5 IQR (clipped to the data),
    points beyond the whiskers drawn as black dots."""
    labels = list(groups)
    all_vals = np.concatenate([np.asarray(groups[k], dtype=np.float64) for k in labels])
    panel = _Panel(55, 30, width - 75, height - 70, (0, len(labels)), _limits(all_vals))
    body = panel.frame(title)
    for i, label in enumerate(labels):
        vals = np.asarray(groups[label], dtype=np.float64)
        q1, med, q3, _, _, whisk_lo, whisk_hi, outliers = box_stats(vals)
        cx = i + 0.5
        half = 0.22
        x_l, x_r = panel.px(cx - half), panel.px(cx + half)
        body.append(f'<line x1="{panel.px(cx):.1f}" y1="{panel.py(whisk_lo):.1f}" '
                    f'x2="{panel.px(cx):.1f}" y2="{panel.py(whisk_hi):.1f}" stroke="#333"/>')
        for wv in (whisk_lo, whisk_hi):
            body.append(f'<line x1="{x_l:.1f}" y1="{panel.py(wv):.1f}" x2="{x_r:.1f}" '
                        f'y2="{panel.py(wv):.1f}" stroke="#333"/>')
        body.append(f'<rect x="{x_l:.1f}" y="{panel.py(q3):.1f}" width="{x_r - x_l:.1f}" '
                    f'height="{panel.py(q1) - panel.py(q3):.1f}" fill="#ffc0cb" stroke="#333"/>')
        body.append(f'<line x1="{x_l:.1f}" y1="{panel.py(med):.1f}" x2="{x_r:.1f}" '
                    f'y2="{panel.py(med):.1f}" stroke="red" stroke-width="2"/>')
        body.append(panel.dots(np.full(len(outliers), cx), outliers, color="black", r=2.0))
        body.append(f'<text x="{panel.px(cx):.1f}" y="{height - 18}" text-anchor="middle" '
                    f'font-size="11" {_FONT}>{label}</text>')
    return _document(width, height, body)


def influence_panels(window_values, attention, shap_values, combined, smoothed,
                     reported_mask, width=820, height=640):
    """Four panels: the explained window, mean attention per lag, signed
    SHAP bars (positive red, negative blue), and the combined map with its
    smoothed curve. Lags run oldest to newest left to right; unreported edge
    lags are greyed."""
    w = len(window_values)
    lags = np.arange(w)
    pw, ph = (width - 110) / 2, (height - 120) / 2
    positions = [(60, 40), (80 + pw, 40), (60, 90 + ph), (80 + pw, 90 + ph)]
    titles = ["observed window", "mean attention weights",
              "per-lag attributions", "combined influence map"]
    body = []

    def lag_panel(pos, values, extra_zero=True):
        lim = list(_limits(values))
        if extra_zero:
            lim[0] = min(lim[0], 0.0)
            lim[1] = max(lim[1], 0.0)
        return _Panel(pos[0], pos[1], pw, ph, (-0.5, w - 0.5), tuple(lim))

    p1 = lag_panel(positions[0], window_values, extra_zero=False)
    body += p1.frame(titles[0])
    body.append(p1.polyline(lags, window_values, color="#1f77b4"))

    p2 = lag_panel(positions[1], attention)
    body += p2.frame(titles[1])
    body.append(p2.bars(lags, attention,
                        ["#9ecae1" if m else "#d9d9d9" for m in reported_mask],
                        half_width=max(1.5, pw / (3 * w))))

    p3 = lag_panel(positions[2], shap_values)
    body += p3.frame(titles[2])
    colors = [("#d62728" if v >= 0 else "#1f77b4") if m else "#d9d9d9"
              for v, m in zip(shap_values, reported_mask)]
    body.append(p3.bars(lags, shap_values, colors, half_width=max(1.5, pw / (3 * w))))

    p4 = lag_panel(positions[3], np.concatenate([combined, smoothed]))
    body += p4.frame(titles[3])
    body.append(p4.polyline(lags, combined, color="#888", dash="4,3"))
    body.append(p4.polyline(lags, smoothed, color="#7b2d8b", width=2.0))

    body.append(f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" '
                f'font-size="11" {_FONT}>lag index (oldest to newest)</text>')
    return _document(width, height, body)
