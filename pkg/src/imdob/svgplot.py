"""Minimal self-contained SVG line charts plus gnuplot-style data files."""
from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_W, _H = 720, 420
_L, _R, _T, _B = 78, 20, 40, 52


def _nice_ticks(lo, hi, n=6):
    if not np.isfinite(lo) or not np.isfinite(hi):
        return np.array([0.0])
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    return np.arange(np.ceil(lo / step) * step, hi + 0.5 * step, step)


def _fmt(v):
    return f"{v:.4g}"


def _thin(t, y, max_points):
    if t.size <= max_points:
        return t, y
    idx = np.unique(np.linspace(0, t.size - 1, max_points).astype(int))
    return t[idx], y[idx]


def line_chart(t, series, title, ylabel, xlabel="t [s]", max_points=2000):
    """Return SVG text for one or more series sharing the time axis.

    Parameters
    ----------
    t : ndarray
    series : dict
        Legend label to 1-D array; NaN samples are skipped.
    """
    t = np.asarray(t, dtype=float)
    data = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in data.values()] + [np.zeros(0)])
    ylo, yhi = (finite.min(), finite.max()) if finite.size else (-1.0, 1.0)
    if yhi == ylo:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = float(t[0]), float(t[-1])
    pw, ph = _W - _L - _R, _H - _T - _B
    X = lambda x: _L + (x - xlo) / (xhi - xlo) * pw
    Y = lambda y: _T + (yhi - y) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>']
    for v in _nice_ticks(xlo, xhi):
        x = X(v)
        out.append(f'<line x1="{x:.2f}" y1="{_T}" x2="{x:.2f}" y2="{_T + ph}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{x:.2f}" y="{_T + ph + 16}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _nice_ticks(ylo, yhi):
        if not ylo <= v <= yhi:
            continue
        y = Y(v)
        out.append(f'<line x1="{_L}" y1="{y:.2f}" x2="{_L + pw}" y2="{y:.2f}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{_L - 6}" y="{y + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{_L + pw / 2}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{_T + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_T + ph / 2})">{escape(ylabel)}</text>')
    for n, (label, y) in enumerate(data.items()):
        color = _COLORS[n % len(_COLORS)]
        tt, yy = _thin(t, y, max_points)
        ok = np.isfinite(yy)
        # break the polyline at NaN gaps
        runs = np.split(np.arange(tt.size), np.flatnonzero(np.diff(ok.astype(int))) + 1)
        for run in runs:
            if run.size < 2 or not ok[run[0]]:
                continue
            pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(tt[run], yy[run]))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts}"/>')
        ly = _T + 14 + 16 * n
        out.append(f'<line x1="{_L + pw - 120}" y1="{ly}" x2="{_L + pw - 96}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_L + pw - 90}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def write_dat(path, t, series):
    """Whitespace-separated columns with a ``#`` header, readable by gnuplot."""
    names = ["t"] + [k.replace(" ", "_") for k in series]
    data = np.column_stack([t] + [np.asarray(v, dtype=float) for v in series.values()])
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("# " + " ".join(names) + "\n")
        np.savetxt(f, data, fmt="%.10g", newline="\n")


def write_chart(stem, t, series, title, ylabel, decimate=1):
    """Write ``stem.svg`` and ``stem.dat``; returns the two paths."""
    t = np.asarray(t)[::decimate]
    series = {k: np.asarray(v)[::decimate] for k, v in series.items()}
    svg, dat = f"{stem}.svg", f"{stem}.dat"
    with open(svg, "w", encoding="utf-8", newline="") as f:
        f.write(line_chart(t, series, title, ylabel))
    write_dat(dat, t, series)
    return svg, dat
