"""Polynomial bases, kernels and weighted least squares with robust covariance."""
from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateDesign, NonpositiveBandwidth

KERNELS = ("uniform", "triangular", "epanechnikov")
VCE_TYPES = ("HC0", "HC1", "HC3")
COLLINEARITY_RTOL = 1e-10


def norm_ppf(p: float) -> float:
    """Standard normal quantile."""
    return NormalDist().inv_cdf(p)


def z_crit(alpha: float) -> float:
    return norm_ppf(1.0 - alpha / 2.0)


# -- bases ----------------------------------------------------------------------

def basis_uni(d, p: int) -> np.ndarray:
    """Powers ``(d, d**2, ..., d**p)``; works on scalars (1-D result) or arrays (n, p)."""
    d = np.asarray(d, dtype=float)
    if p < 0:
        raise ValueError("order must be nonnegative")
    if p == 0:
        return np.zeros(d.shape + (0,))
    out = np.empty(d.shape + (p,))
    out[..., 0] = d
    for k in range(1, p):
        out[..., k] = out[..., k - 1] * d
    return out


def biv_exponents(p: int):
    """Exponent pairs of the bivariate basis in graded order.

    Degree ``g`` block: ``u1**g, u1**(g-1) u2, ..., u2**g``.
    """
    return [(g - j, j) for g in range(1, p + 1) for j in range(g + 1)]


def basis_biv(u, p: int) -> np.ndarray:
    """Bivariate polynomial basis without constant, ``p(p+3)/2`` terms."""
    u = np.asarray(u, dtype=float)
    if p < 0:
        raise ValueError("order must be nonnegative")
    u1, u2 = u[..., 0], u[..., 1]
    cols = [u1 ** a * u2 ** b for a, b in biv_exponents(p)]
    if not cols:
        return np.zeros(u.shape[:-1] + (0,))
    return np.stack(cols, axis=-1)


# -- kernels --------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    kind: str = "triangular"
    radial: bool = False

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")

    def profile(self, r):
        """Kernel profile on ``r = |t|/h`` (or ``||t||/h``)."""
        r = np.abs(np.asarray(r, dtype=float))
        if self.kind == "uniform":
            return (r <= 1.0).astype(float)
        if self.kind == "triangular":
            return np.maximum(0.0, 1.0 - r)
        return np.maximum(0.0, 0.75 * (1.0 - r * r))


def kernel_weight(k: Kernel, t, h: float):
    """Kernel weight of offset ``t`` at bandwidth ``h``.

    Univariate kernels take scalar offsets; radial kernels take 2-D offsets
    (last axis of length 2) and apply the profile to the Euclidean norm.
    """
    if not h > 0:
        raise NonpositiveBandwidth(f"bandwidth must be positive, got {h}")
    t = np.asarray(t, dtype=float)
    r = np.hypot(t[..., 0], t[..., 1]) if k.radial else np.abs(t)
    w = k.profile(r / h)
    return float(w) if np.ndim(w) == 0 else w


# -- weighted least squares -------------------------------------------------------

@dataclass
class WlsFit:
    """Result of :func:`wls`.

    Coefficients and covariance are full length; entries for dropped columns
    are NaN.  ``influence`` holds one row per observation with positive weight
    (rows in the order of ``rows``) such that ``cov = influence.T @ influence``.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    effective_n: int
    dropped_columns: list
    retained: list
    residuals: np.ndarray = field(repr=False)
    leverage: np.ndarray = field(repr=False)
    influence: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)

    def se(self, j: int) -> float:
        return float(np.sqrt(self.covariance[j, j]))


def independent_columns(A: np.ndarray, rtol: float = COLLINEARITY_RTOL) -> list:
    """Greedy left-to-right selection of linearly independent columns.

    Columns are equilibrated first; a column is kept when its residual after
    projection on the kept ones exceeds ``rtol`` (the largest pivot is 1).
    """
    norms = np.linalg.norm(A, axis=0)
    keep = []
    Q = np.zeros((A.shape[0], 0))
    for j in range(A.shape[1]):
        if norms[j] == 0 or not np.isfinite(norms[j]):
            continue
        a = A[:, j] / norms[j]
        r = a - Q @ (Q.T @ a)
        r = r - Q @ (Q.T @ r)
        nr = np.linalg.norm(r)
        if nr > rtol:
            keep.append(j)
            Q = np.column_stack([Q, r / nr])
    return keep


def wls(Z, Y, W, vce: str = "HC3") -> WlsFit:
    """Weighted least squares with heteroskedasticity-robust sandwich covariance.

    Parameters
    ----------
    Z : array_like, shape (n, k)
    Y : array_like, shape (n,)
    W : array_like, shape (n,)
        Nonnegative weights; rows with zero weight are ignored.
    vce : {"HC0", "HC1", "HC3"}

    Raises
    ------
    DegenerateDesign
        If every weight is zero or no column survives the collinearity check.
    """
    if vce not in VCE_TYPES:
        raise ValueError(f"vce must be one of {VCE_TYPES}")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    Y = np.asarray(Y, dtype=float)
    W = np.asarray(W, dtype=float)
    if not (len(Z) == len(Y) == len(W)):
        raise ValueError("Z, Y and W must have the same number of rows")
    if np.any(W < 0):
        raise ValueError("weights must be nonnegative")
    rows = np.flatnonzero(W > 0)
    if len(rows) == 0:
        raise DegenerateDesign("all weights are zero")
    Zp, Yp, Wp = Z[rows], Y[rows], W[rows]
    sw = np.sqrt(Wp)
    A = Zp * sw[:, None]
    keep = independent_columns(A)
    if not keep:
        raise DegenerateDesign("no estimable column")
    k_all = Z.shape[1]
    dropped = [j for j in range(k_all) if j not in keep]

    scale = np.linalg.norm(A[:, keep], axis=0)
    Q, R = np.linalg.qr(A[:, keep] / scale)
    beta_s = solve_triangular(R, Q.T @ (sw * Yp))
    beta = beta_s / scale
    resid = Yp - Zp[:, keep] @ beta
    lev = np.einsum("ij,ij->i", Q, Q)

    n, k = len(rows), len(keep)
    if vce == "HC0":
        adj = np.ones(n)
    elif vce == "HC1":
        adj = np.full(n, np.sqrt(n / (n - k)) if n > k else np.nan)
    else:
        one_m = 1.0 - lev
        adj = np.where(one_m > 1e-12, 1.0 / np.where(one_m > 1e-12, one_m, 1.0), 0.0)
    # influence_i = (Z'WZ)^{-1} z_i w_i e_i adj_i, computed via the scaled QR
    Rinv = solve_triangular(R, np.eye(k))
    infl = ((Q * (sw * resid * adj)[:, None]) @ Rinv.T) / scale
    cov_k = infl.T @ infl

    coef = np.full(k_all, np.nan)
    coef[keep] = beta
    cov = np.full((k_all, k_all), np.nan)
    cov[np.ix_(keep, keep)] = 0.5 * (cov_k + cov_k.T)
    influence = np.full((n, k_all), np.nan)
    influence[:, keep] = infl
    return WlsFit(coef, cov, n, dropped, keep, resid, lev, influence, rows)
