"""Command-line interface: ``bdd estimate | simulate | mc | rdplot | tube``.

Exit status 0 on success, 1 on input errors (bad flags, unreadable or
invalid files, invalid parameters), 2 when estimation is degenerate.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bandwidth as bw
from . import curve as cv
from . import geometry as geo
from .data import derive_frame, load_dataset, write_dataset
from .errors import BDDError, DegenerateDesign, NonpositiveBandwidth
from .io import csv_text, dumps17
from .montecarlo import EstimatorConfig, monte_carlo
from .pooled import PooledSpec, estimate, estimate_rbc, rd_plot_bins
from .regression import KERNELS, Kernel
from .simulate import demo_dgp, format_dgp, read_dgp, simulate
from .tube import tube_csv, verify_tube_limit

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _target(text: str):
    if text in cv.METHODS:
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("spec must be 1..8, distance or location") from None
    if not 1 <= v <= 8:
        raise argparse.ArgumentTypeError("spec must be 1..8, distance or location")
    return v


def _bandwidth(text: str):
    if text == "mse":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--h must be a number or 'mse'") from None


def _add_estimator_flags(p):
    p.add_argument("--spec", type=_target, default=6, help="1..8, distance or location")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--q", type=int, default=None, help="bias-correction order (> p)")
    p.add_argument("--kernel", choices=KERNELS, default="triangular")
    p.add_argument("--h", type=_bandwidth, default="mse", help="bandwidth or 'mse'")
    p.add_argument("--grid", type=int, default=40, help="grid size J for curve targets")
    p.add_argument("--segments", choices=("file", "whole", "vertices"), default="file",
                   help="segment partition (default: as in the boundary file)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--vce", choices=("HC0", "HC1", "HC3"), default="HC3")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bdd", description="Boundary discontinuity estimation and simulation.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", help="estimate a pooled effect or an effect curve")
    e.add_argument("--data", required=True)
    e.add_argument("--boundary", required=True)
    _add_estimator_flags(e)
    e.add_argument("--out", choices=("json", "csv"), default="json")
    e.add_argument("--output", help="write here instead of stdout")
    e.add_argument("--draws", type=int, default=cv.DEFAULT_DRAWS)
    e.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("simulate", help="draw a dataset from a DGP file")
    s.add_argument("--dgp-spec", help="DGP file (default: bundled demo)")
    s.add_argument("--out", required=True, help="CSV path; truth goes to <out>.truth.json")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--boundary-out", help="also write the boundary file here")

    m = sub.add_parser("mc", help="Monte Carlo coverage experiment")
    m.add_argument("--dgp-spec", help="DGP file (default: bundled demo)")
    m.add_argument("--reps", type=int, default=200)
    m.add_argument("--n", type=int, default=None)
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--draws", type=int, default=cv.DEFAULT_DRAWS)
    m.add_argument("--output", help="write here instead of stdout")
    _add_estimator_flags(m)

    r = sub.add_parser("rdplot", help="binned means against signed distance")
    r.add_argument("--data", required=True)
    r.add_argument("--boundary", required=True)
    r.add_argument("--bins", type=int, default=20)
    r.add_argument("--scheme", choices=("evenly-spaced", "quantile"), default="evenly-spaced")
    r.add_argument("--h", type=float, default=None)
    r.add_argument("--output")

    q = sub.add_parser("tube", help="tube-integral convergence table for a boundary")
    q.add_argument("--boundary", required=True)
    q.add_argument("--h", type=float, nargs="+", default=[0.1, 0.03, 0.01, 0.003, 0.001])
    q.add_argument("--support", type=float, nargs=4, default=[-1, 1, -1, 1],
                   metavar=("X1LO", "X1HI", "X2LO", "X2HI"))
    q.add_argument("--output")
    return ap


def _emit(text: str, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _partition(boundary, partition, how):
    if how == "whole":
        return geo.SegmentPartition.whole(boundary)
    if how == "vertices":
        return geo.SegmentPartition.at_vertices(boundary)
    return partition


def _check_h(h):
    if h != "mse" and not h > 0:
        raise NonpositiveBandwidth(f"bandwidth must be positive, got {h:g}")


def _cmd_estimate(a) -> int:
    _check_h(a.h)
    boundary, part = geo.read_boundary(a.boundary)
    frame = derive_frame(load_dataset(a.data), boundary, _partition(boundary, part, a.segments))
    if a.spec in cv.METHODS:
        kern = Kernel(a.kernel, radial=True)
        grid = cv.make_grid(boundary, a.grid)
        sel = None
        if a.h == "mse":
            sel = bw.h_mse_integrated(frame, boundary, grid, a.p, kern)
            h = sel.h
        else:
            h = a.h
        kw = dict(kernel=kern, h=h, alpha=a.alpha, vce=a.vce, n_draws=a.draws, seed=a.seed,
                  n_jobs=a.jobs)
        if a.q is not None:
            res = cv.estimate_curve_rbc(a.spec, frame, boundary, grid, a.p, a.q, **kw)
        else:
            res = cv.estimate_curve(a.spec, frame, boundary, grid, a.p, **kw)
        if a.out == "csv":
            _emit(res.to_csv(), a.output)
        else:
            d = res.to_dict()
            if sel is not None:
                d["bandwidth"] = sel.to_dict()
            _emit(dumps17(d), a.output)
        return EXIT_OK

    kern = Kernel(a.kernel)
    sel = None
    if a.h == "mse":
        sel = bw.h_mse_pooled(frame, a.p if a.spec not in (1, 2, 3) else 1, kern)
        h = sel.h
    else:
        h = a.h
    spec = PooledSpec(a.spec, h, a.p, kern, a.vce)
    res = estimate_rbc(spec, frame, a.q, a.alpha) if a.q is not None else estimate(spec, frame, a.alpha)
    if sel is not None:
        res.bandwidth = sel.to_dict()
    if a.out == "csv":
        tau = np.atleast_1d(res.tau_hat)
        se = np.atleast_1d(res.se)
        ci = np.atleast_2d(res.ci_conventional)
        rbc = np.atleast_2d(res.ci_rbc) if res.ci_rbc is not None else np.full((len(tau), 2), np.nan)
        rows = [(k + 1, tau[k], se[k], ci[k, 0], ci[k, 1], rbc[k, 0], rbc[k, 1],
                 res.h_used, res.n_treated, res.n_control) for k in range(len(tau))]
        _emit(csv_text(["piece", "tau_hat", "se", "ci_lo", "ci_hi", "ci_rbc_lo", "ci_rbc_hi",
                        "h_used", "n_treated", "n_control"], rows), a.output)
    else:
        _emit(res.to_json(), a.output)
    return EXIT_OK


def _dgp(a):
    spec = demo_dgp() if a.dgp_spec is None else read_dgp(a.dgp_spec)
    kw = {}
    if getattr(a, "seed", None) is not None and a.command == "simulate":
        kw["seed"] = a.seed
    if a.n is not None:
        kw["n"] = a.n
    return spec.with_(**kw) if kw else spec


def _cmd_simulate(a) -> int:
    spec = _dgp(a)
    sim = simulate(spec)
    write_dataset(a.out, sim.data)
    Path(str(a.out) + ".truth.json").write_text(
        dumps17(sim.truth.to_dict() | {"dgp": format_dgp(spec)}) + "\n")
    if a.boundary_out:
        geo.write_boundary(a.boundary_out, spec.boundary)
    return EXIT_OK


def _cmd_mc(a) -> int:
    _check_h(a.h)
    spec = _dgp(a)
    segs = "vertices" if a.segments == "vertices" else "whole"
    cfg = EstimatorConfig(a.spec, a.p, a.q, a.kernel, a.h, a.alpha, a.grid, a.vce, a.draws, segs)
    rep = monte_carlo(spec, cfg, a.reps, a.seed, a.jobs)
    _emit(rep.to_json(), a.output)
    return EXIT_OK


def _cmd_rdplot(a) -> int:
    if a.h is not None:
        _check_h(a.h)
    boundary, part = geo.read_boundary(a.boundary)
    frame = derive_frame(load_dataset(a.data), boundary, part)
    _emit(rd_plot_bins(frame, a.bins, a.scheme, a.h).to_csv(), a.output)
    return EXIT_OK


def _cmd_tube(a) -> int:
    for h in a.h:
        _check_h(h)
    boundary, _ = geo.read_boundary(a.boundary)
    s = a.support
    rows = verify_tube_limit(boundary, hs=a.h, support=((s[0], s[1]), (s[2], s[3])))
    _emit(tube_csv(rows), a.output)
    return EXIT_OK


COMMANDS = {"estimate": _cmd_estimate, "simulate": _cmd_simulate, "mc": _cmd_mc,
            "rdplot": _cmd_rdplot, "tube": _cmd_tube}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except DegenerateDesign as exc:
        print(f"bdd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (BDDError, ValueError, OSError) as exc:
        print(f"bdd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
