"""Monte Carlo driver for coverage, bias and MSE experiments."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bandwidth as bw
from . import curve as cv
from . import geometry as geo
from .data import frame_from_arrays
from .errors import BDDError
from .io import dumps17
from .pooled import PooledSpec, estimate, estimate_rbc
from .regression import Kernel
from .simulate import DgpSpec, draw, seed_for, truth


@dataclass(frozen=True)
class EstimatorConfig:
    """What to estimate in each replication.

    ``target`` is a pooled specification id (1..8), ``"distance"`` or
    ``"location"``.  ``h`` is a number, ``"mse"`` (plug-in), or a callable
    of the sample size.  With ``q`` set, intervals are bias-corrected.
    """

    target: int | str = 6
    p: int = 1
    q: int | None = 2
    kernel: str = "triangular"
    h: float | str = "mse"
    alpha: float = 0.05
    grid: int = 20
    vce: str = "HC3"
    n_draws: int = cv.DEFAULT_DRAWS
    segments: str = "whole"

    @property
    def is_curve(self) -> bool:
        return self.target in cv.METHODS


@dataclass
class McReport:
    n_reps: int
    coverage: dict
    bias: float
    mse: float
    mean_h: float
    seed: int
    seeds: list
    n_failed: int
    estimates: np.ndarray = field(repr=False)
    truth: object = field(repr=False, default=None)
    failures: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {"n_reps": self.n_reps, "coverage": self.coverage, "bias": self.bias,
                "mse": self.mse, "mean_h": self.mean_h, "seed": self.seed,
                "seeds": self.seeds, "n_failed": self.n_failed, "estimates": self.estimates,
                "truth": self.truth, "failures": self.failures}

    def to_json(self) -> str:
        return dumps17(self.to_dict())


def _partition(boundary, how):
    if how == "whole":
        return geo.SegmentPartition.whole(boundary)
    if how == "vertices":
        return geo.SegmentPartition.at_vertices(boundary)
    raise ValueError("segments must be 'whole' or 'vertices'")


def _covers(ci, target) -> np.ndarray:
    ci = np.asarray(ci, dtype=float)
    return (ci[..., 0] <= target) & (target <= ci[..., 1])


def _one_pooled(cfg, frame, target):
    kern = Kernel(cfg.kernel)
    if cfg.h == "mse":
        p_sel = cfg.p if cfg.target not in (1, 2, 3) else 1
        h = bw.h_mse_pooled(frame, p_sel, kern).h
    else:
        h = cfg.h(frame.n) if callable(cfg.h) else float(cfg.h)
    spec = PooledSpec(int(cfg.target), h, cfg.p, kern, cfg.vce)
    res = estimate_rbc(spec, frame, cfg.q, cfg.alpha) if cfg.q else estimate(spec, frame, cfg.alpha)
    out = {"estimate": np.atleast_1d(res.tau_hat), "h": h,
           "conventional": np.all(_covers(res.ci_conventional, target))}
    if cfg.q:
        out["rbc"] = np.all(_covers(res.ci_rbc, target))
    return out


def _one_curve(cfg, frame, boundary, grid, target):
    kern = Kernel(cfg.kernel, radial=True)
    if cfg.h == "mse":
        h = bw.h_mse_integrated(frame, boundary, grid, cfg.p, kern).h
    else:
        h = cfg.h(frame.n) if callable(cfg.h) else float(cfg.h)
    kw = dict(kernel=kern, h=h, alpha=cfg.alpha, vce=cfg.vce, n_draws=cfg.n_draws)
    if cfg.q:
        res = cv.estimate_curve_rbc(cfg.target, frame, boundary, grid, cfg.p, cfg.q, **kw)
    else:
        res = cv.estimate_curve(cfg.target, frame, boundary, grid, cfg.p, **kw)
    if not np.all(res.valid):
        raise BDDError("some grid points could not be estimated")
    pw = _covers(res.ci_pointwise, target)
    return {"estimate": res.tau_hat, "h": h,
            "pointwise": float(np.mean(pw)),
            "pointwise_simultaneous": bool(np.all(pw)),
            "band": bool(np.all(_covers(res.band, target)))}


def monte_carlo(dgp: DgpSpec, config: EstimatorConfig, n_reps: int, seed: int = 0,
                n_jobs: int = 1) -> McReport:
    """Independent replications with per-rep seeds ``SeedSequence(seed, spawn_key=(rep,))``.

    Coverage is measured against quadrature truths: the density-weighted
    boundary average for pooled targets (per piece for id 8) and
    ``tau`` at each grid point for curve targets.  Failed replications are
    counted and excluded from the averages.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    boundary = dgp.boundary
    partition = _partition(boundary, config.segments)
    tr = truth(dgp)
    if config.is_curve:
        grid = cv.make_grid(boundary, config.grid)
        target = dgp.tau(grid.points)
    else:
        grid = None
        target = np.asarray(tr.per_segment if config.target == 8 and partition.L > 1
                            else [tr.bate])

    def rep(r):
        rng = np.random.default_rng(seed_for(seed, r))
        y, x, _ = draw(dgp, rng)
        frame = frame_from_arrays(y, x, boundary, partition)
        try:
            if config.is_curve:
                return _one_curve(config, frame, boundary, grid, target)
            return _one_pooled(config, frame, target)
        except BDDError as exc:
            return {"failed": f"rep {r}: {exc}"}

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            outs = list(ex.map(rep, range(n_reps)))
    else:
        outs = [rep(r) for r in range(n_reps)]

    ok = [o for o in outs if "failed" not in o]
    failures = [o["failed"] for o in outs if "failed" in o]
    k = len(target)
    est = np.full((n_reps, k), np.nan)
    for r, o in enumerate(outs):
        if "failed" not in o:
            est[r] = o["estimate"]
    keys = sorted({key for o in ok for key in o} - {"estimate", "h"})
    coverage = {key: float(np.mean([o[key] for o in ok])) if ok else float("nan") for key in keys}
    err = est[~np.isnan(est).any(axis=1)] - target
    bias = float(np.mean(err)) if len(err) else float("nan")
    mse = float(np.mean(err ** 2)) if len(err) else float("nan")
    mean_h = float(np.mean([o["h"] for o in ok])) if ok else float("nan")
    return McReport(n_reps, coverage, bias, mse, mean_h, seed, list(range(n_reps)),
                    len(failures), est, tr.to_dict() | {"target": target}, failures)
