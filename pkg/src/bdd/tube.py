"""Numerical check of the tubular-neighbourhood integral limit.

The left side ``(1/h) int_{T(h)} g(d(x)/h) m(x) dx`` is computed on a uniform
lattice of cell side ``h / 50`` clipped to a rectangular support; the right
side is ``c * int_0^1 g * int_B m dH`` with ``c = 2``.  A verification tool,
not a production path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import geometry as geo
from .io import csv_text

C_B = 2.0
CELLS_PER_H = 50
_CHUNK = 2_000_000


@dataclass
class TubeRow:
    h: float
    lhs: float
    rhs: float

    @property
    def rel_error(self) -> float:
        return abs(self.lhs - self.rhs) / abs(self.rhs)


def _capsule_rows(a, b, h, yc):
    """x-extent of ``{x : dist(x, [a, b]) <= h}`` on each horizontal line ``y = yc``."""
    lo = np.full(len(yc), np.inf)
    hi = np.full(len(yc), -np.inf)
    for p in (a, b):
        dy = yc - p[1]
        ok = np.abs(dy) <= h
        half = np.sqrt(np.maximum(h * h - dy * dy, 0.0))
        lo = np.where(ok, np.minimum(lo, p[0] - half), lo)
        hi = np.where(ok, np.maximum(hi, p[0] + half), hi)
    u = (b - a) / np.linalg.norm(b - a)
    nrm = np.array([-u[1], u[0]]) * h
    rect = [a + nrm, b + nrm, b - nrm, a - nrm]
    for p, q in zip(rect, rect[1:] + rect[:1]):
        if p[1] == q[1]:
            on = yc == p[1]
            lo = np.where(on, np.minimum(lo, min(p[0], q[0])), lo)
            hi = np.where(on, np.maximum(hi, max(p[0], q[0])), hi)
            continue
        s = (yc - p[1]) / (q[1] - p[1])
        ok = (s >= 0) & (s <= 1)
        x = p[0] + s * (q[0] - p[0])
        lo = np.where(ok, np.minimum(lo, x), lo)
        hi = np.where(ok, np.maximum(hi, x), hi)
    return lo, hi


def tube_integral(boundary: geo.Boundary, m, g, h: float, support,
                  cells_per_h: int = CELLS_PER_H) -> float:
    """``(1/h) int_{T(h) cap support} g(d(x, B)/h) m(x) dx`` by clipped-lattice quadrature.

    ``support`` is ``((x1_lo, x1_hi), (x2_lo, x2_hi))``.  Each lattice cell is
    credited to the segment nearest its clipped centroid (lowest index on
    ties) so overlapping capsules are not double counted.
    """
    (xl, xh), (yl, yh) = support
    delta = h / cells_per_h
    verts = boundary.vertices
    ox = verts[:, 0].min() - h
    oy = verts[:, 1].min() - h
    S, E = boundary.starts, boundary.ends
    total = 0.0
    for k in range(boundary.n_segments):
        a, b = S[k], E[k]
        r0 = math.floor((max(min(a[1], b[1]) - h, yl) - oy) / delta)
        r1 = math.ceil((min(max(a[1], b[1]) + h, yh) - oy) / delta)
        rows = np.arange(r0, r1)
        step = max(1, int(_CHUNK // ((abs(b[0] - a[0]) + 2 * h) / delta + 2)))
        for start in range(0, len(rows), step):
            rr = rows[start:start + step]
            y0 = oy + rr * delta
            lo, hi = np.full(len(rr), np.inf), np.full(len(rr), -np.inf)
            for yy in (y0, y0 + delta):
                l_, h_ = _capsule_rows(a, b, h, yy)
                lo, hi = np.minimum(lo, l_), np.maximum(hi, h_)
            l2, h2 = _capsule_rows(a, b, h, np.clip(a[1], y0, y0 + delta))
            lo, hi = np.minimum(lo, l2), np.maximum(hi, h2)
            l3, h3 = _capsule_rows(a, b, h, np.clip(b[1], y0, y0 + delta))
            lo, hi = np.minimum(lo, l3), np.maximum(hi, h3)
            ok = np.isfinite(lo)
            rr, y0, lo, hi = rr[ok], y0[ok], lo[ok], hi[ok]
            c0 = np.floor((np.maximum(lo, xl) - ox) / delta).astype(np.int64)
            c1 = np.ceil((np.minimum(hi, xh) - ox) / delta).astype(np.int64)
            cnt = np.maximum(c1 - c0, 0)
            if cnt.sum() == 0:
                continue
            row_of = np.repeat(np.arange(len(rr)), cnt)
            col = np.repeat(c0, cnt) + (np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
            x0 = ox + col * delta
            yy0 = y0[row_of]
            cx0, cx1 = np.maximum(x0, xl), np.minimum(x0 + delta, xh)
            cy0, cy1 = np.maximum(yy0, yl), np.minimum(yy0 + delta, yh)
            area = np.clip(cx1 - cx0, 0, None) * np.clip(cy1 - cy0, 0, None)
            keep = area > 0
            cen = np.column_stack([0.5 * (cx0 + cx1), 0.5 * (cy0 + cy1)])[keep]
            area = area[keep]
            pr = geo.project(boundary, cen)
            own = pr.segment == k
            dist = np.abs(pr.distance)
            inside = own & (dist <= h)
            if not np.any(inside):
                continue
            u = dist[inside] / h
            vals = np.asarray(g(u), dtype=float) * np.broadcast_to(
                np.asarray(m(cen[inside]), dtype=float), u.shape)
            total += float(np.sum(vals * area[inside]))
    return total / h


def tube_limit(boundary: geo.Boundary, m, g, c: float = C_B, n_quad: float = 2000) -> float:
    gi, _ = quad(lambda s: float(g(np.array([s]))[0]), 0.0, 1.0, limit=200)
    return c * gi * geo.line_integral(boundary, m, n_quad)


def verify_tube_limit(boundary: geo.Boundary, m=None, g=None, hs=(0.1, 0.03, 0.01, 0.003, 0.001),
               support=((-1.0, 1.0), (-1.0, 1.0)), c: float = C_B) -> list:
    """Convergence table of the tube integral against its boundary limit."""
    m = (lambda x: np.ones(len(x))) if m is None else m
    g = (lambda u: ((u >= 0) & (u < 1)).astype(float)) if g is None else g
    rhs = tube_limit(boundary, m, g, c)
    return [TubeRow(h, tube_integral(boundary, m, g, h, support), rhs) for h in hs]


def tube_csv(rows) -> str:
    return csv_text(["h", "lhs", "rhs", "rel_error"],
                    [(r.h, r.lhs, r.rhs, r.rel_error) for r in rows])
