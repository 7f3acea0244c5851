"""Plug-in MSE-optimal bandwidths.

Pooled (univariate in ``D``) targets minimise ``B^2 h^(2p+2) + V/(n h)``;
per-point (bivariate) targets minimise ``B^2 h^(2p+2) + V/(n h^2)``.  Bias
constants come from order ``p+2`` pilot fits; the kernel constants are
moments of the equivalent kernel computed by Gauss-Legendre quadrature.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import geometry as geo
from .data import SampleFrame
from .errors import InsufficientData, PilotDegenerate
from .regression import Kernel, basis_biv, basis_uni, biv_exponents, wls

MIN_PILOT = 50
NEIGHBORHOOD_SHARE = 0.5
ANGLE_WARN_DEG = 90.0
EXACT_FIT_RTOL = 1e-12
_ROUNDOFF = 1e-20


def _exact_fit(s2, y) -> bool:
    """Residual variance at the level of rounding error or of the outcome spread."""
    return s2 <= EXACT_FIT_RTOL * float(np.var(y)) + _ROUNDOFF * float(np.mean(y * y))
_GL_RADIAL = 48
_GL_ANGULAR = 64


@dataclass
class BandwidthResult:
    h: float
    bias_constant: float
    variance_constant: float
    exponent: float
    pilot_order: int
    fallback: bool = False
    clamped: bool = False
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "h": self.h, "bias_constant": self.bias_constant,
            "variance_constant": self.variance_constant, "exponent": self.exponent,
            "pilot_order": self.pilot_order, "fallback": self.fallback,
            "clamped": self.clamped, "warnings": list(self.warnings),
        }


def mse_optimal_h(B2: float, V: float, n: int, p: int, dim: int) -> float:
    """Minimiser of ``B2 h^(2p+2) + V / (n h^dim)``."""
    return (dim * V / ((2 * p + 2) * B2 * n)) ** (1.0 / (2 * p + 2 + dim))


def score_diameter(x) -> float:
    x = np.asarray(x, dtype=float)
    try:
        pts = x[ConvexHull(x).vertices]
    except (QhullError, ValueError):
        pts = np.array([x.min(axis=0), x.max(axis=0)])
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def regularity_warnings(boundary: geo.Boundary, threshold_deg: float = ANGLE_WARN_DEG) -> list:
    ang = np.degrees(boundary.interior_angles())
    sharp = ang[ang < threshold_deg]
    if len(sharp) == 0:
        return []
    return [f"boundary has {len(sharp)} interior angle(s) below {threshold_deg:g} degrees "
            f"(min {sharp.min():.1f}); plug-in bias constant assumes a regular boundary"]


# -- kernel constants -------------------------------------------------------------

@lru_cache(maxsize=None)
def univariate_constants(kind: str, p: int):
    """``(B_K, V_K)`` for a one-sided order-``p`` fit on ``[0, 1]``.

    ``B_K = e0' G^-1 int r(u) u^(p+1) K`` and ``V_K = e0' G^-1 L G^-1 e0`` with
    ``G = int r r' K`` and ``L = int r r' K^2``.
    """
    u, wq = np.polynomial.legendre.leggauss(_GL_RADIAL)
    u, wq = 0.5 * (u + 1), 0.5 * wq
    k = Kernel(kind).profile(u)
    r = np.column_stack([np.ones_like(u), basis_uni(u, p)])
    G = (r * (wq * k)[:, None]).T @ r
    Lam = (r * (wq * k * k)[:, None]).T @ r
    e = np.linalg.solve(G, np.eye(p + 1)[0])
    bk = float(e @ (r.T @ (wq * k * u ** (p + 1))))
    vk = float(e @ Lam @ e)
    return bk, vk


def _sector_nodes(intervals):
    rho, wr = np.polynomial.legendre.leggauss(_GL_RADIAL)
    rho, wr = 0.5 * (rho + 1), 0.5 * wr
    th_all, w_all = [], []
    for lo, hi in intervals:
        th, wt = np.polynomial.legendre.leggauss(_GL_ANGULAR)
        th_all.append(0.5 * (hi - lo) * th + 0.5 * (hi + lo))
        w_all.append(0.5 * (hi - lo) * wt)
    th, wt = np.concatenate(th_all), np.concatenate(w_all)
    R, TH = np.meshgrid(rho, th, indexing="ij")
    W = np.outer(wr, wt) * R
    pts = np.stack([R.ravel() * np.cos(TH.ravel()), R.ravel() * np.sin(TH.ravel())], axis=1)
    return pts, W.ravel(), R.ravel()


def sector_constants(kind: str, p: int, intervals):
    """Bias weights and variance constant for one side of a per-point fit.

    Returns ``(bias_w, V)``: ``bias_w[a]`` multiplies the order-``p+1``
    coefficient with exponent ``biv_exponents(p+1)[-(p+2) + a]``.
    """
    pts, w, rho = _sector_nodes(intervals)
    k = Kernel(kind).profile(rho)
    r = np.column_stack([np.ones(len(w)), basis_biv(pts, p)])
    G = (r * (w * k)[:, None]).T @ r
    Lam = (r * (w * k * k)[:, None]).T @ r
    e = np.linalg.solve(G, np.eye(r.shape[1])[0])
    lead = basis_biv(pts, p + 1)[:, -(p + 2):]
    bias_w = e @ (r.T @ ((w * k)[:, None] * lead))
    return bias_w, float(e @ Lam @ e)


# -- pooled --------------------------------------------------------------------------

def _pilot_uni(d, y, order):
    fit = wls(np.column_stack([np.ones(len(d)), basis_uni(d, order)]), y, np.ones(len(d)),
              vce="HC0")
    if fit.dropped_columns or len(d) <= order + 1:
        raise PilotDegenerate("pilot polynomial in D is not estimable")
    dof = len(d) - (order + 1)
    s2 = float(fit.residuals @ fit.residuals / dof)
    if _exact_fit(s2, y):
        raise PilotDegenerate("pilot fits the outcome exactly")
    return fit.coefficients, s2


def h_mse_pooled(frame: SampleFrame, p: int = 1, kernel: Kernel = Kernel("triangular"),
                 min_pilot: int = MIN_PILOT, angle_threshold: float = ANGLE_WARN_DEG
                 ) -> BandwidthResult:
    """Plug-in bandwidth for the interacted pooled fit of order ``p`` in ``D``.

    ``B`` uses the ``D^(p+1)`` coefficients of per-side global pilots of
    order ``p+2``; ``V`` uses their residual variances and the densities of
    ``D`` at zero from counts in a normal-reference window.  Callers
    estimating ids 1-3 pass ``p=1``.
    """
    n = frame.n
    if n < min_pilot:
        raise InsufficientData(f"need at least {min_pilot} observations, got {n}")
    d, y = frame.d, frame.y
    expo = 1.0 / (2 * p + 3)
    notes = regularity_warnings(frame.boundary, angle_threshold)
    bk, vk = univariate_constants(kernel.kind, p)
    sd = float(np.std(d))
    try:
        sides = []
        c = 1.06 * sd * n ** (-0.2)
        for mask in (frame.t == 1, frame.t == 0):
            coef, s2 = _pilot_uni(d[mask], y[mask], p + 2)
            near = int(np.sum(np.abs(d[mask]) <= c))
            if near == 0:
                raise PilotDegenerate("no observations near the boundary on one side")
            sides.append((coef[p + 1], s2, near / (n * c)))
        (b1, s21, f1), (b0, s20, f0) = sides
        B = bk * (b1 - (-1) ** (p + 1) * b0)
        V = vk * (s21 / f1 + s20 / f0)
        if not (B != 0 and np.isfinite(B) and V > 0):
            raise PilotDegenerate("plug-in constants are degenerate")
        h = mse_optimal_h(B * B, V, n, p, 1)
        fallback = False
    except PilotDegenerate as exc:
        B, V, fallback = np.nan, np.nan, True
        h = sd * n ** (-expo)
        notes.append(f"rule-of-thumb fallback: {exc}")
    return _finish(h, B, V, expo, p + 2, fallback, notes, frame.x)


def _finish(h, B, V, expo, order, fallback, notes, x):
    diam = score_diameter(x)
    clamped = bool(h > diam)
    if clamped:
        h = diam
        notes.append("bandwidth clamped to the score-support diameter")
    if fallback:
        warnings.warn(notes[-1] if not clamped else notes[-2], stacklevel=3)
    return BandwidthResult(float(h), float(B), float(V), expo, order, fallback, clamped, notes)


# -- per point ---------------------------------------------------------------------

def _disc_box_area(c, r, lo, hi, nodes=200) -> float:
    """Area of the disc ``|x - c| <= r`` intersected with the box ``[lo, hi]``."""
    a, b = max(c[0] - r, lo[0]), min(c[0] + r, hi[0])
    if b <= a:
        return 0.0
    s, w = np.polynomial.legendre.leggauss(nodes)
    xs = 0.5 * (b - a) * s + 0.5 * (b + a)
    half = np.sqrt(np.maximum(r * r - (xs - c[0]) ** 2, 0.0))
    chord = np.clip(np.minimum(c[1] + half, hi[1]) - np.maximum(c[1] - half, lo[1]), 0, None)
    return float(0.5 * (b - a) * (w @ chord))


def _point_constants(frame, boundary, b, p, kernel, share):
    """Squared bias constant and variance constant at ``b`` (per-point fit)."""
    n = frame.n
    b = np.asarray(b, dtype=float)
    rel = frame.x - b
    r = np.hypot(rel[:, 0], rel[:, 1])
    m = max(int(math.ceil(share * n)), 1)
    near = np.argsort(r, kind="stable")[:m]
    treated, control = geo.side_sectors(boundary, b)
    lo, hi = frame.x.min(axis=0), frame.x.max(axis=0)
    r0 = math.sqrt(float(np.var(frame.x[:, 0]) + np.var(frame.x[:, 1]))) * n ** (-1.0 / 6.0)
    area = _disc_box_area(b, r0, lo, hi)
    count = int(np.sum(r <= r0))
    if area <= 0 or count == 0:
        raise PilotDegenerate("no observations near the grid point")
    fb = count / (n * area)
    order = p + 2
    n_terms = 1 + len(biv_exponents(order))
    B, V = 0.0, 0.0
    for tval, sector, sign in ((1, treated, 1.0), (0, control, -1.0)):
        rows = near[frame.t[near] == tval]
        if len(rows) <= n_terms:
            raise PilotDegenerate("too few pilot observations on one side")
        Z = np.column_stack([np.ones(len(rows)), basis_biv(rel[rows], order)])
        fit = wls(Z, frame.y[rows], np.ones(len(rows)), vce="HC0")
        if fit.dropped_columns:
            raise PilotDegenerate("pilot polynomial in X is not estimable")
        s2 = float(fit.residuals @ fit.residuals / (len(rows) - n_terms))
        if _exact_fit(s2, frame.y[rows]):
            raise PilotDegenerate("pilot fits the outcome exactly")
        n_low = 1 + len(biv_exponents(p))
        lead = fit.coefficients[n_low:n_low + p + 2]
        bias_w, vk = sector_constants(kernel.kind, p, sector)
        B += sign * float(bias_w @ lead)
        V += vk * s2 / fb
    return B * B, V


def _fallback_point_h(frame, p):
    spread = math.sqrt(0.5 * float(np.var(frame.x[:, 0]) + np.var(frame.x[:, 1])))
    return spread * frame.n ** (-1.0 / (2 * p + 4))


def h_mse_location(frame: SampleFrame, boundary: geo.Boundary, b, p: int = 1,
                   kernel: Kernel = Kernel("triangular", radial=True),
                   share: float = NEIGHBORHOOD_SHARE, min_pilot: int = MIN_PILOT,
                   angle_threshold: float = ANGLE_WARN_DEG) -> BandwidthResult:
    """Plug-in bandwidth for the per-point fit at boundary point ``b``.

    The pilot is an order ``p+2`` bivariate fit on each side among the
    ``share`` fraction of observations nearest to ``b``.
    """
    return h_mse_integrated(frame, boundary, np.asarray(b, dtype=float).reshape(1, 2), p,
                            kernel, share, min_pilot, angle_threshold)


def h_mse_integrated(frame: SampleFrame, boundary: geo.Boundary, grid, p: int = 1,
                     kernel: Kernel = Kernel("triangular", radial=True),
                     share: float = NEIGHBORHOOD_SHARE, min_pilot: int = MIN_PILOT,
                     angle_threshold: float = ANGLE_WARN_DEG) -> BandwidthResult:
    """Single bandwidth minimising the summed per-point MSE proxies over ``grid``.

    ``grid`` is a ``GridSpec`` or an ``(J, 2)`` array of boundary points.
    Reported constants are the sums ``sum B_j^2`` (as its square root) and ``sum V_j``.
    """
    pts = np.asarray(getattr(grid, "points", grid), dtype=float).reshape(-1, 2)
    n = frame.n
    if n < min_pilot:
        raise InsufficientData(f"need at least {min_pilot} observations, got {n}")
    expo = 1.0 / (2 * p + 4)
    notes = regularity_warnings(boundary, angle_threshold)
    try:
        B2, V = 0.0, 0.0
        for b in pts:
            geo.check_on_boundary(boundary, b)
            b2j, vj = _point_constants(frame, boundary, b, p, kernel, share)
            B2 += b2j
            V += vj
        if not (B2 > 0 and np.isfinite(B2) and V > 0):
            raise PilotDegenerate("plug-in constants are degenerate")
        h = mse_optimal_h(B2, V, n, p, 2)
        fallback = False
    except PilotDegenerate as exc:
        B2, V, fallback = np.nan, np.nan, True
        h = _fallback_point_h(frame, p)
        notes.append(f"rule-of-thumb fallback: {exc}")
    return _finish(h, math.sqrt(B2), V, expo, p + 2, fallback, notes, frame.x)


def h_mse_per_point(frame, boundary, grid, p=1, kernel=Kernel("triangular", radial=True),
                    **kw) -> list:
    pts = np.asarray(getattr(grid, "points", grid), dtype=float).reshape(-1, 2)
    return [h_mse_location(frame, boundary, b, p, kernel, **kw) for b in pts]
