"""Pooled estimators of the boundary average treatment effect.

Eight local regression specifications on the observations inside the tube
``|D| <= h``; the treatment effect is the coefficient on ``T`` (or, for id 8,
the per-piece coefficients on ``T * iota_L(S)``).

====  ==========================================================
id    regressors
====  ==========================================================
1     1, T
2     iota_L(S), T
3     iota_L(S), T, r_p(X)
4     1, T, r_p(D)
5     iota_L(S), T, r_p(D)
6     iota_L(S), T, r_p(D), T r_p(D)
7     iota_L(S), T, r_p(X), T r_p(X)
8     iota_L(S), T iota_L(S), iota_L(S) x r_p(D), T iota_L(S) x r_p(D)
====  ==========================================================
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import SampleFrame
from .errors import EmptyWindow, DegenerateDesign, NonpositiveBandwidth, OrderNotGreater
from .io import csv_text, dumps17
from .regression import Kernel, basis_biv, basis_uni, biv_exponents, kernel_weight, wls, z_crit

UNIFORM = Kernel("uniform")


@dataclass(frozen=True)
class PooledSpec:
    """Configuration of one pooled specification.

    ``seg_intercepts`` only matters for id 8: when False the segment
    intercepts are left out, matching the regressor list exactly as printed
    in the original display (control-side intercepts are then forced to zero).
    """

    id: int
    h: float
    p: int = 1
    kernel: Kernel = field(default_factory=lambda: Kernel("triangular"))
    vce: str = "HC3"
    seg_intercepts: bool = True

    def __post_init__(self):
        if self.id not in range(1, 9):
            raise ValueError("specification id must be in 1..8")
        if not self.h > 0:
            raise NonpositiveBandwidth(f"bandwidth must be positive, got {self.h}")
        if self.p < 0:
            raise ValueError("order must be nonnegative")
        if self.id in (1, 2):
            object.__setattr__(self, "p", 0)
        if self.kernel.radial:
            raise ValueError("pooled specifications use a univariate kernel on D")

    @property
    def effective_kernel(self) -> Kernel:
        return UNIFORM if self.id in (1, 2, 3) else self.kernel


@dataclass
class Design:
    Z: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    names: list
    treat_cols: list

    def __iter__(self):
        return iter((self.Z, self.Y, self.W))


def _onehot(s, L):
    return (s[:, None] == np.arange(1, L + 1)[None, :]).astype(float)


def build_design(spec: PooledSpec, frame: SampleFrame) -> Design:
    d, t = frame.d, frame.t.astype(float)
    W = kernel_weight(spec.effective_kernel, d, spec.h)
    W = np.atleast_1d(W)
    inside = W > 0
    if not np.any(inside & (frame.t == 1)) or not np.any(inside & (frame.t == 0)):
        raise EmptyWindow(f"no observations within h={spec.h:g} on one side of the boundary")
    L, p = frame.L, spec.p
    ones = np.ones(frame.n)
    iota = _onehot(frame.s, L)
    iota_names = [f"seg{l + 1}" for l in range(L)]
    rD = basis_uni(d, p)
    rD_names = [f"D^{k}" for k in range(1, p + 1)]
    # centring X keeps the column space (constants are spanned) and conditions the fit
    xc = frame.x - frame.x[inside].mean(axis=0)
    rX = basis_biv(xc, p)
    rX_names = [f"X1^{a}X2^{b}" for a, b in biv_exponents(p)]

    blocks, names = [], []

    def add(cols, labels):
        blocks.append(np.asarray(cols).reshape(frame.n, -1))
        names.extend(labels)

    i = spec.id
    if i in (1, 4):
        add(ones, ["const"])
    elif i != 8:
        add(iota, iota_names)
    if i != 8:
        add(t, ["T"])
    if i == 3:
        add(rX, rX_names)
    if i in (4, 5, 6):
        add(rD, rD_names)
    if i == 6:
        add(t[:, None] * rD, ["T*" + n for n in rD_names])
    if i == 7:
        add(rX, rX_names)
        add(t[:, None] * rX, ["T*" + n for n in rX_names])
    if i == 8:
        if spec.seg_intercepts:
            add(iota, iota_names)
        add(t[:, None] * iota, ["T*" + n for n in iota_names])
        kron = (iota[:, :, None] * rD[:, None, :]).reshape(frame.n, L * p)
        kron_names = [f"{a}*{b}" for a in iota_names for b in rD_names]
        add(kron, kron_names)
        add(t[:, None] * kron, ["T*" + n for n in kron_names])
    Z = np.hstack(blocks)
    if i == 8:
        treat = [names.index(f"T*{n}") for n in iota_names]
    else:
        treat = [names.index("T")]
    return Design(Z, frame.y, W, names, treat)


@dataclass
class EstimateResult:
    tau_hat: np.ndarray | float
    se: np.ndarray | float
    ci_conventional: np.ndarray
    n_treated: int
    n_control: int
    h_used: float
    p_used: int
    alpha: float
    spec_id: int
    ci_rbc: np.ndarray | None = None
    tau_rbc: np.ndarray | float | None = None
    se_rbc: np.ndarray | float | None = None
    q_used: int | None = None
    bandwidth: dict | None = None

    @property
    def effective_n(self) -> int:
        return self.n_treated + self.n_control

    def to_dict(self) -> dict:
        out = {
            "spec": self.spec_id,
            "tau_hat": self.tau_hat,
            "se": self.se,
            "ci_conventional": self.ci_conventional,
            "ci_rbc": self.ci_rbc,
            "tau_rbc": self.tau_rbc,
            "se_rbc": self.se_rbc,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "h_used": self.h_used,
            "p_used": self.p_used,
            "q_used": self.q_used,
            "alpha": self.alpha,
        }
        if self.bandwidth is not None:
            out["bandwidth"] = self.bandwidth
        return out

    def to_json(self) -> str:
        return dumps17(self.to_dict())


def _fit(spec: PooledSpec, frame: SampleFrame):
    des = build_design(spec, frame)
    fit = wls(des.Z, des.Y, des.W, vce=spec.vce)
    tau = fit.coefficients[des.treat_cols]
    se = np.sqrt(np.diag(fit.covariance)[des.treat_cols])
    if spec.id != 8 and not np.isfinite(tau[0]):
        raise DegenerateDesign("treatment coefficient is not identified")
    if spec.id == 8 and not np.any(np.isfinite(tau)):
        raise DegenerateDesign("no segment-specific effect is identified")
    w_pos = des.W > 0
    n1 = int(np.sum(w_pos & (frame.t == 1)))
    n0 = int(np.sum(w_pos & (frame.t == 0)))
    return tau, se, n1, n0


def _scalar(v, spec_id):
    return float(v[0]) if spec_id != 8 else np.asarray(v, float)


def _ci(tau, se, z):
    tau, se = np.asarray(tau, float), np.asarray(se, float)
    return np.stack([tau - z * se, tau + z * se], axis=-1)


def estimate(spec: PooledSpec, frame: SampleFrame, alpha: float = 0.05) -> EstimateResult:
    """Point estimate and conventional Wald interval for one specification."""
    tau, se, n1, n0 = _fit(spec, frame)
    z = z_crit(alpha)
    return EstimateResult(
        tau_hat=_scalar(tau, spec.id), se=_scalar(se, spec.id),
        ci_conventional=_ci(_scalar(tau, spec.id), _scalar(se, spec.id), z),
        n_treated=n1, n_control=n0, h_used=spec.h, p_used=spec.p, alpha=alpha,
        spec_id=spec.id)


def rbc_spec(spec: PooledSpec, q: int) -> PooledSpec:
    """Specification used for the bias-corrected interval at order ``q``."""
    if spec.id in (1, 2):
        return replace(spec, id=6, p=q, kernel=UNIFORM)
    if spec.id == 3:
        return replace(spec, id=7, p=q, kernel=UNIFORM)
    return replace(spec, p=q)


def estimate_rbc(spec: PooledSpec, frame: SampleFrame, q: int = 2,
                 alpha: float = 0.05) -> EstimateResult:
    """Order-``p`` point estimate with a robust bias-corrected interval.

    The interval is centred at the order-``q`` estimate and uses the
    order-``q`` standard error, both at the same bandwidth.
    """
    if q <= spec.p:
        raise OrderNotGreater(f"q={q} must exceed p={spec.p}")
    res = estimate(spec, frame, alpha)
    tau_q, se_q, _, _ = _fit(rbc_spec(spec, q), frame)
    res.tau_rbc = _scalar(tau_q, spec.id)
    res.se_rbc = _scalar(se_q, spec.id)
    res.ci_rbc = _ci(res.tau_rbc, res.se_rbc, z_crit(alpha))
    res.q_used = q
    return res


def dim_closed_form(frame: SampleFrame, h: float) -> float:
    """Difference in mean outcomes inside the tube, by direct group means."""
    treated = (frame.d >= 0) & (frame.d <= h)
    control = (frame.d < 0) & (frame.d >= -h)
    return frame.y[treated].mean() - frame.y[control].mean()


# -- RD plot ---------------------------------------------------------------------

@dataclass
class RdPlotBins:
    center: np.ndarray
    mean_y: np.ndarray
    count: np.ndarray
    side: np.ndarray  # 0 control, 1 treated

    def to_csv(self) -> str:
        rows = zip(self.center, self.mean_y, self.count.astype(int), self.side.astype(int))
        return csv_text(["bin_center", "mean_y", "count", "side"], rows)


def _side_bins(d, y, lo, hi, nb, scheme, closed_right):
    if scheme == "evenly-spaced":
        edges = np.linspace(lo, hi, nb + 1)
        idx = np.searchsorted(edges, d, side="right") - 1
        if closed_right:
            idx[d == hi] = nb - 1
        centers = 0.5 * (edges[:-1] + edges[1:])
    else:
        order = np.argsort(d, kind="stable")
        idx = np.empty(len(d), dtype=int)
        idx[order] = (np.arange(len(d)) * nb) // max(len(d), 1)
        centers = np.array([d[idx == b].mean() if np.any(idx == b) else np.nan
                            for b in range(nb)])
    counts = np.bincount(idx, minlength=nb)[:nb]
    sums = np.bincount(idx, weights=y, minlength=nb)[:nb]
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return centers, means, counts


def rd_plot_bins(frame: SampleFrame, n_bins: int = 20, scheme: str = "evenly-spaced",
                 h: float | None = None) -> RdPlotBins:
    """Binned outcome means against the signed distance, per side.

    Bins cover ``[-h, 0)`` and ``[0, h]`` (the observed support when ``h`` is
    None).  Empty bins have count 0 and NaN mean.
    """
    if n_bins < 1:
        raise ValueError("need at least one bin per side")
    if scheme not in ("evenly-spaced", "quantile"):
        raise ValueError("scheme must be 'evenly-spaced' or 'quantile'")
    d, y = frame.d, frame.y
    if h is None:
        lo, hi = (d.min() if np.any(d < 0) else -1.0), (d.max() if np.any(d >= 0) else 1.0)
    else:
        lo, hi = -h, h
    ctrl = (d < 0) & (d >= lo)
    trt = (d >= 0) & (d <= hi)
    parts = []
    for mask, a, b, side, closed in ((ctrl, lo, 0.0, 0, False), (trt, 0.0, hi, 1, True)):
        c, m, k = _side_bins(d[mask], y[mask], a, b, n_bins, scheme, closed)
        parts.append((c, m, k, np.full(n_bins, side)))
    return RdPlotBins(*(np.concatenate(col) for col in zip(*parts)))


def global_poly_fit(frame: SampleFrame, order: int = 4, h: float | None = None):
    """Per-side global polynomial in D for plot overlays; returns two coefficient arrays."""
    out = []
    for side in (0, 1):
        m = frame.t == side
        if h is not None:
            m &= np.abs(frame.d) <= h
        out.append(np.polynomial.polynomial.polyfit(frame.d[m], frame.y[m], order))
    return out
