"""CSV and SVG output for experiment runs."""
import csv
import math
from xml.sax.saxutils import escape

import numpy as np

TRAJECTORY_HEADER = ("k", "gamma", "dist", "objective", "manifold_dim", "identified")


class CSVSchemaError(ValueError):
    pass


def fmt(v):
    """Text form used in every CSV cell: 17 significant digits for floats."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_trajectory_csv(traj, path, K=None):
    """One row per recorded iterate; ``identified`` is 1 from record ``K`` on."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for k, g, d, obj, dim in zip(traj.k, traj.gamma, traj.dist, traj.objective,
                                     traj.manifold_dim):
            ident = int(K is not None and k >= K)
            w.writerow([fmt(int(k)), fmt(float(g)), fmt(float(d)), fmt(float(obj)),
                        fmt(int(dim)), fmt(ident)])


def write_report_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("field", "value"))
        for key, value in rows:
            w.writerow((key, fmt(value)))


def read_trajectory_csv(path):
    """Columns of a trajectory CSV as float arrays.

    Only ``k`` and ``dist`` are required; other known columns are read when
    present.

    Raises
    ------
    CSVSchemaError
        On a missing required column or a non-numeric cell.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in ("k", "dist") if c not in fields]
        if missing:
            raise CSVSchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = {c: [] for c in fields if c in TRAJECTORY_HEADER}
        for lineno, row in enumerate(reader, start=2):
            for c in cols:
                try:
                    cols[c].append(float(row[c]))
                except (TypeError, ValueError):
                    raise CSVSchemaError(f"{path}:{lineno}: bad value {row[c]!r} in column {c}")
    return {c: np.asarray(v) for c, v in cols.items()}


def predicted_profile(k, dist, K, rho):
    """``rho^(k - K) * ||x_K - x*||`` for the records with ``k >= K``."""
    k = np.asarray(k, dtype=float)
    dist = np.asarray(dist, dtype=float)
    i0 = int(np.searchsorted(k, K))
    if i0 >= k.size:
        return k[:0], k[:0]
    kk = k[i0:]
    return kk, dist[i0] * np.power(rho, kk - kk[0])


# -- SVG ----------------------------------------------------------------------

W, H = 640, 400
MARGIN = dict(left=70, right=20, top=30, bottom=50)


def _path(xs, ys, sx, sy):
    pts = [(sx(x), sy(y)) for x, y in zip(xs, ys) if y > 0 and math.isfinite(y)]
    if len(pts) < 1:
        return ""
    head, *tail = pts
    d = "M%.2f,%.2f" % head + "".join(" L%.2f,%.2f" % p for p in tail)
    return d


def convergence_svg(k, dist, K=None, rho=None, title=""):
    """Semi-log plot of ``||x_k - x*||`` with an optional predicted line.

    The predicted series starts at the first record with ``k >= K`` and
    decays like ``rho^(k - K)``; ``K`` is drawn as a dashed vertical rule.
    Non-positive distances cannot be shown on a log axis and are skipped.
    """
    k = np.asarray(k, dtype=float)
    dist = np.asarray(dist, dtype=float)
    pos = dist[(dist > 0) & np.isfinite(dist)]
    if k.size == 0 or pos.size == 0:
        raise ValueError("nothing to plot: no positive distances")
    series = [("observed", k, dist, "#1f77b4", "")]
    if K is not None and rho is not None and rho > 0:
        kp, dp = predicted_profile(k, dist, K, rho)
        if kp.size:
            series.append(("predicted", kp, dp, "#d62728", ' stroke-dasharray="6,4"'))
            pos = np.concatenate([pos, dp[dp > 0]])
    lo = math.floor(math.log10(pos.min()))
    hi = math.ceil(math.log10(pos.max()))
    if hi == lo:
        hi += 1
    x0, x1 = float(k.min()), float(k.max())
    if x1 == x0:
        x1 = x0 + 1.0
    pw = W - MARGIN["left"] - MARGIN["right"]
    ph = H - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return MARGIN["top"] + (hi - math.log10(v)) / (hi - lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
           'fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="14">{escape(title)}</text>')
    step = max(1, (hi - lo) // 8)
    for e in range(lo, hi + 1, step):
        y = sy(10.0 ** e)
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{y:.2f}" x2="{MARGIN["left"]}" '
                   f'y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{y + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">1e{e}</text>')
    for v in np.linspace(x0, x1, 5):
        x = sx(v)
        out.append(f'<text x="{x:.2f}" y="{H - MARGIN["bottom"] + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{v:.0f}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{H - 10}" text-anchor="middle" '
               'font-family="sans-serif" font-size="12">k</text>')
    out.append(f'<text x="15" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 15 {MARGIN["top"] + ph / 2:.1f})">||x_k - x*||</text>')
    if K is not None and x0 <= K <= x1:
        xk = sx(K)
        out.append(f'<line class="identification" x1="{xk:.2f}" y1="{MARGIN["top"]}" '
                   f'x2="{xk:.2f}" y2="{MARGIN["top"] + ph}" stroke="gray" '
                   'stroke-dasharray="2,3"/>')
    for i, (name, xs, ys, color, extra) in enumerate(series):
        d = _path(xs, ys, sx, sy)
        if d:
            out.append(f'<path class="{name}" d="{d}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"{extra}/>')
        ly = MARGIN["top"] + 15 + 16 * i
        lx = W - MARGIN["right"] - 110
        out.append(f'<text x="{lx}" y="{ly}" font-family="sans-serif" font-size="11" '
                   f'fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(text, path):
    with open(path, "w") as fh:
        fh.write(text)
