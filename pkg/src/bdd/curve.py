"""Boundary treatment-effect curves: pointwise fits, sup-t bands, aggregation."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .data import SampleFrame
from .errors import AllWeightsZero, DegenerateDesign, NonpositiveBandwidth, OrderNotGreater
from .io import csv_text, dumps17
from .regression import Kernel, basis_biv, basis_uni, kernel_weight, wls, z_crit

METHODS = ("distance", "location")
DEFAULT_DRAWS = 10_000
EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class GridSpec:
    points: np.ndarray
    arclengths: np.ndarray

    @property
    def J(self) -> int:
        return len(self.arclengths)


def make_grid(boundary: geo.Boundary, J: int) -> GridSpec:
    pts, s = geo.discretize(boundary, J)
    return GridSpec(pts, s)


@dataclass
class CurveResult:
    method: str
    grid: GridSpec
    tau_hat: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    ci_pointwise: np.ndarray
    band: np.ndarray
    c_band: float
    h_per_point: np.ndarray
    p_used: int
    alpha: float
    status: list
    n_eff: np.ndarray
    q_used: int | None = None
    tau_rbc: np.ndarray | None = None
    seed: int = 0
    n_draws: int = DEFAULT_DRAWS

    @property
    def center(self) -> np.ndarray:
        """Centre of the intervals: the order-q estimate when bias-corrected."""
        return self.tau_hat if self.tau_rbc is None else self.tau_rbc

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.tau_hat) & np.isfinite(self.se)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "p_used": self.p_used,
            "q_used": self.q_used,
            "alpha": self.alpha,
            "seed": self.seed,
            "n_draws": self.n_draws,
            "c_band": self.c_band,
            "arclength": self.grid.arclengths,
            "b1": self.grid.points[:, 0],
            "b2": self.grid.points[:, 1],
            "h": self.h_per_point,
            "tau_hat": self.tau_hat,
            "tau_rbc": self.tau_rbc,
            "se": self.se,
            "ci_lo": self.ci_pointwise[:, 0],
            "ci_hi": self.ci_pointwise[:, 1],
            "band_lo": self.band[:, 0],
            "band_hi": self.band[:, 1],
            "n_eff": self.n_eff,
            "status": self.status,
            "cov": self.cov,
        }

    def to_json(self) -> str:
        return dumps17(self.to_dict())

    def to_csv(self) -> str:
        header = ["arclength", "b1", "b2", "tau_hat", "se", "ci_lo", "ci_hi", "band_lo", "band_hi"]
        rows = zip(self.grid.arclengths, self.grid.points[:, 0], self.grid.points[:, 1],
                   self.tau_hat, self.se, self.ci_pointwise[:, 0], self.ci_pointwise[:, 1],
                   self.band[:, 0], self.band[:, 1])
        return csv_text(header, rows)


@dataclass
class _PointFit:
    tau: float = np.nan
    psi: np.ndarray | None = None
    n_eff: int = 0
    status: str = "ok"


def _interacted_fit(y, t, basis, w, n_total, rows, vce) -> _PointFit:
    if not (np.any(t == 1) and np.any(t == 0)):
        return _PointFit(status="empty")
    Z = np.column_stack([np.ones(len(y)), t, basis, t[:, None] * basis])
    try:
        fit = wls(Z, y, w, vce=vce)
    except DegenerateDesign:
        return _PointFit(status="degenerate")
    if fit.dropped_columns:
        return _PointFit(status="degenerate")
    psi = np.zeros(n_total)
    psi[rows[fit.rows]] = fit.influence[:, 1]
    return _PointFit(float(fit.coefficients[1]), psi, fit.effective_n)


def _fit_point(method, frame, b, p, kernel, h, vce) -> _PointFit:
    rel = frame.x - b
    r = np.hypot(rel[:, 0], rel[:, 1])
    rows = np.flatnonzero(r <= h)
    if len(rows) == 0:
        return _PointFit(status="empty")
    t = frame.t[rows].astype(float)
    if method == "distance":
        d = np.where(frame.t[rows] == 1, r[rows], -r[rows])
        w = kernel_weight(Kernel(kernel.kind, radial=False), d, h)
        basis = basis_uni(d, p)
    else:
        w = kernel_weight(Kernel(kernel.kind, radial=True), rel[rows], h)
        basis = basis_biv(rel[rows], p)
    w = np.atleast_1d(w)
    keep = w > 0
    if not np.all(keep):
        rows, t, w, basis = rows[keep], t[keep], w[keep], basis[keep]
    return _interacted_fit(frame.y[rows], t, basis, w, frame.n, rows, vce)


def _fit_curve(method, frame, boundary, grid, p, kernel, h, vce, n_jobs):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    hs = np.broadcast_to(np.asarray(h, dtype=float), (grid.J,)).copy()
    if np.any(~(hs > 0)):
        raise NonpositiveBandwidth("bandwidths must be positive")
    for b in grid.points:
        geo.check_on_boundary(boundary, b)

    def job(j):
        return _fit_point(method, frame, grid.points[j], p, kernel, hs[j], vce)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            fits = list(ex.map(job, range(grid.J)))
    else:
        fits = [job(j) for j in range(grid.J)]

    tau = np.array([f.tau for f in fits])
    ok = np.array([f.psi is not None for f in fits])
    Psi = np.zeros((frame.n, grid.J))
    for j, f in enumerate(fits):
        if f.psi is not None:
            Psi[:, j] = f.psi
    cov = Psi.T @ Psi
    cov[~ok, :] = np.nan
    cov[:, ~ok] = np.nan
    se = np.sqrt(np.diag(cov))
    return tau, se, cov, hs, [f.status for f in fits], np.array([f.n_eff for f in fits])


def uniform_band(curve: CurveResult, alpha: float | None = None, n_draws: int = DEFAULT_DRAWS,
                 seed: int = 0):
    """Sup-t critical value and simultaneous band around ``curve.center``.

    The critical value is the ``1 - alpha`` quantile of ``max_j |G_j|`` with
    ``G`` centred Gaussian with the correlation implied by ``curve.cov``.
    Grid points without an estimate are left out (NaN band).  The value is
    floored at the pointwise critical value so the band always contains the
    pointwise intervals.
    """
    alpha = curve.alpha if alpha is None else alpha
    c = max(sup_t_critical_value(curve.cov, curve.valid, alpha, n_draws, seed), z_crit(alpha))
    center = curve.center
    band = np.stack([center - c * curve.se, center + c * curve.se], axis=-1)
    band[~curve.valid] = np.nan
    return c, band


def sup_t_critical_value(cov, valid=None, alpha=0.05, n_draws=DEFAULT_DRAWS, seed=0) -> float:
    cov = np.asarray(cov, dtype=float)
    if valid is None:
        valid = np.isfinite(np.diag(cov))
    valid = np.asarray(valid) & (np.diag(cov) > 0)
    idx = np.flatnonzero(valid)
    if len(idx) == 0:
        return np.nan
    C = cov[np.ix_(idx, idx)]
    sd = np.sqrt(np.diag(C))
    corr = C / np.outer(sd, sd)
    evals, evecs = np.linalg.eigh(0.5 * (corr + corr.T))
    root = evecs * np.sqrt(np.clip(evals, EIG_FLOOR, None))[None, :]
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n_draws, len(idx))) @ root.T
    return float(np.quantile(np.abs(G).max(axis=1), 1.0 - alpha))


def _assemble(method, grid, tau, se, cov, hs, status, neff, p, alpha, n_draws, seed,
              q=None, tau_rbc=None) -> CurveResult:
    z = z_crit(alpha)
    center = tau if tau_rbc is None else tau_rbc
    ci = np.stack([center - z * se, center + z * se], axis=-1)
    res = CurveResult(method, grid, tau, se, cov, ci, np.full_like(ci, np.nan), np.nan, hs,
                      p, alpha, status, neff, q, tau_rbc, seed, n_draws)
    res.c_band, res.band = uniform_band(res, alpha, n_draws, seed)
    return res


def estimate_curve(method: str, frame: SampleFrame, boundary: geo.Boundary, grid: GridSpec,
                   p: int = 1, kernel: Kernel = Kernel("triangular"), h=None, alpha=0.05,
                   vce="HC3", n_draws=DEFAULT_DRAWS, seed=0, n_jobs=1) -> CurveResult:
    tau, se, cov, hs, status, neff = _fit_curve(method, frame, boundary, grid, p, kernel, h,
                                                vce, n_jobs)
    return _assemble(method, grid, tau, se, cov, hs, status, neff, p, alpha, n_draws, seed)


def estimate_distance(frame, boundary, grid, p=1, kernel=Kernel("triangular"), h=None,
                      **kw) -> CurveResult:
    """Per grid point: regress Y on 1, T, r_p(D(b)), T r_p(D(b)) with weights K(D(b)/h).

    ``D(b)`` is each unit's signed distance to the grid point itself.
    """
    return estimate_curve("distance", frame, boundary, grid, p, kernel, h, **kw)


def estimate_location(frame, boundary, grid, p=1, kernel=Kernel("triangular", radial=True),
                      h=None, **kw) -> CurveResult:
    """Per grid point: regress Y on 1, T, r_p(X-b), T r_p(X-b) with weights K((X-b)/h)."""
    return estimate_curve("location", frame, boundary, grid, p, kernel, h, **kw)


def estimate_curve_rbc(method, frame, boundary, grid, p=1, q=2, kernel=Kernel("triangular"),
                       h=None, alpha=0.05, vce="HC3", n_draws=DEFAULT_DRAWS, seed=0,
                       n_jobs=1) -> CurveResult:
    """Order-p point estimates; intervals, covariance and band from the order-q fit."""
    if q <= p:
        raise OrderNotGreater(f"q={q} must exceed p={p}")
    tau_p, *_ = _fit_curve(method, frame, boundary, grid, p, kernel, h, vce, n_jobs)
    tau_q, se, cov, hs, status, neff = _fit_curve(method, frame, boundary, grid, q, kernel, h,
                                                  vce, n_jobs)
    res = _assemble(method, grid, tau_p, se, cov, hs, status, neff, p, alpha, n_draws, seed,
                    q=q, tau_rbc=tau_q)
    return res


# -- aggregation -----------------------------------------------------------------

@dataclass
class AggregateResult:
    wbate: float
    wbate_se: float
    lbate: float
    lbate_point: np.ndarray
    lbate_arclength: float
    weights_used: str
    n_skipped: int
    weights: np.ndarray = field(repr=False)
    wbate_rbc: float | None = None
    wbate_ci: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "wbate": self.wbate, "wbate_se": self.wbate_se, "wbate_rbc": self.wbate_rbc,
            "wbate_ci": self.wbate_ci, "lbate": self.lbate, "lbate_point": self.lbate_point,
            "lbate_arclength": self.lbate_arclength, "weights_used": self.weights_used,
            "n_skipped": self.n_skipped,
        }


def trapezoid_weights(s, length: float, closed: bool) -> np.ndarray:
    """Trapezoidal quadrature weights at sorted arclengths ``s``."""
    s = np.asarray(s, dtype=float)
    if len(s) == 1:
        return np.array([length])
    if closed:
        nxt = np.roll(s, -1)
        nxt[-1] += length
        prv = np.roll(s, 1)
        prv[0] -= length
        return 0.5 * (nxt - prv)
    a = np.empty(len(s))
    a[0] = 0.5 * (s[1] - s[0])
    a[-1] = 0.5 * (s[-1] - s[-2])
    a[1:-1] = 0.5 * (s[2:] - s[:-2])
    return a


def slice_density(frame: SampleFrame, boundary: geo.Boundary, s, h: float) -> np.ndarray:
    """Boundary density at arclengths ``s`` from counts in tubular slices.

    Each grid point owns the tube ``|D| <= h`` over the arclength slice between
    the midpoints to its neighbours; the count is divided by ``n * 2h * slice``.
    End caps beyond an open boundary are excluded.
    """
    s = np.asarray(s, dtype=float)
    length = boundary.length
    mids = 0.5 * (s[1:] + s[:-1])
    if boundary.closed:
        wrap = 0.5 * (s[0] + length + s[-1])
        lo = np.concatenate([[wrap - length], mids])
        hi = np.concatenate([mids, [wrap]])
    else:
        lo = np.concatenate([[0.0], mids])
        hi = np.concatenate([mids, [length]])
    inside = np.abs(frame.d) <= h
    arc = frame.arc.copy()
    if not boundary.closed:
        cap = (arc <= 0.0) | (arc >= length)
        inside &= ~cap | (np.abs(frame.d) <= boundary.tol)
    else:
        arc = np.where(arc < lo[0], arc + length, arc)
    counts = np.array([np.sum(inside & (arc >= a) & (arc < b)) for a, b in zip(lo, hi)],
                      dtype=float)
    if not boundary.closed:
        counts[-1] += np.sum(inside & (arc == length))
    return counts / (frame.n * 2.0 * h * (hi - lo))


def aggregate(curve: CurveResult, boundary: geo.Boundary, weights="uniform",
              frame: SampleFrame | None = None, h: float | None = None) -> AggregateResult:
    """WBATE by trapezoidal arclength quadrature and LBATE by the grid maximum.

    ``weights`` is ``"uniform"``, ``"density"`` (needs ``frame``), or a callable
    mapping an ``(J, 2)`` array of boundary points to nonnegative weights.
    Grid points without an estimate are skipped.
    """
    ok = curve.valid
    if ok.sum() < 2:
        raise DegenerateDesign("aggregation needs at least two estimated grid points")
    s = curve.grid.arclengths[ok]
    pts = curve.grid.points[ok]
    if isinstance(weights, str) and weights == "uniform":
        w, label = np.ones(len(s)), "uniform"
    elif isinstance(weights, str) and weights == "density":
        if frame is None:
            raise ValueError("density weights need the sample frame")
        hh = float(np.nanmean(curve.h_per_point)) if h is None else h
        w, label = slice_density(frame, boundary, s, hh), "density"
    elif callable(weights):
        w, label = np.asarray(weights(pts), dtype=float).reshape(len(s)), "user"
    else:
        raise ValueError("weights must be 'uniform', 'density' or a callable")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    a = trapezoid_weights(s, boundary.length, boundary.closed) * w
    total = a.sum()
    if not total > 0:
        raise AllWeightsZero("quadrature of the weight function is zero")
    lam = a / total
    wbate = float(lam @ curve.tau_hat[ok])
    C = curve.cov[np.ix_(ok, ok)]
    se = float(np.sqrt(max(lam @ C @ lam, 0.0)))
    z = z_crit(curve.alpha)
    center = float(lam @ curve.center[ok])
    j = int(np.argmax(curve.tau_hat[ok]))
    return AggregateResult(
        wbate=wbate, wbate_se=se, lbate=float(curve.tau_hat[ok][j]), lbate_point=pts[j],
        lbate_arclength=float(s[j]), weights_used=label, n_skipped=int((~ok).sum()),
        weights=w, wbate_rbc=center if curve.tau_rbc is not None else None,
        wbate_ci=np.array([center - z * se, center + z * se]))
