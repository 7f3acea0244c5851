"""Synthetic data-generating processes with quadrature truths."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy.optimize import minimize_scalar

from . import geometry as geo
from .data import Dataset
from .errors import ParseError
from .io import dumps17

SHAPES = ("line", "l-shape", "jagged")
DENSITIES = ("uniform-box", "tilted")
TRUTH_QUAD = 2000  # 10x the default line-integral resolution


def parse_poly(text: str) -> dict:
    """Parse ``"i,j:coef; ..."`` into ``{(i, j): coef}`` (monomial ``x1^i x2^j``)."""
    out: dict = {}
    for term in filter(None, (t.strip() for t in text.split(";"))):
        m = re.fullmatch(r"(\d+)\s*,\s*(\d+)\s*:\s*(\S+)", term)
        if not m:
            raise ValueError(f"bad polynomial term {term!r}")
        key = (int(m.group(1)), int(m.group(2)))
        out[key] = out.get(key, 0.0) + float(m.group(3))
    return out


def format_poly(poly: dict) -> str:
    return "; ".join(f"{i},{j}:{c:.17g}" for (i, j), c in sorted(poly.items()))


def eval_poly(poly: dict, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for (i, j), c in poly.items():
        out = out + c * x[..., 0] ** i * x[..., 1] ** j
    return out


def make_boundary(shape: str, kinks: int = 3, amplitude: float = 0.15) -> geo.Boundary:
    """Canonical boundaries on ``[-1, 1]^2``.

    ``line`` runs from (-1, 0) to (1, 0) with the upper half treated;
    ``l-shape`` has its corner at the origin with the first quadrant treated;
    ``jagged`` is a zigzag version of ``line`` with ``kinks`` interior vertices.
    """
    if shape == "line":
        return geo.Boundary(np.array([[-1.0, 0.0], [1.0, 0.0]]), treated_side="left")
    if shape == "l-shape":
        return geo.Boundary(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]),
                            treated_side="right")
    if shape == "jagged":
        xs = np.linspace(-1.0, 1.0, kinks + 2)
        ys = amplitude * np.array([0.0] + [(-1.0) ** i for i in range(kinks)] + [0.0])
        return geo.Boundary(np.column_stack([xs, ys]), treated_side="left")
    raise ValueError(f"unknown boundary shape {shape!r}")


@dataclass(frozen=True)
class DgpSpec:
    boundary_shape: str = "l-shape"
    mu0: dict = field(default_factory=dict)
    mu1: dict = field(default_factory=dict)
    noise_sd: float = 1.0
    density: str = "uniform-box"
    tilt: float = 0.0
    n: int = 1000
    seed: int = 0
    kinks: int = 3

    def __post_init__(self):
        if self.boundary_shape not in SHAPES:
            raise ValueError(f"boundary_shape must be one of {SHAPES}")
        if self.density not in DENSITIES:
            raise ValueError(f"density must be one of {DENSITIES}")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be nonnegative")
        if not abs(self.tilt) < 1:
            raise ValueError("tilt must lie in (-1, 1)")
        if self.n < 0:
            raise ValueError("n must be nonnegative")

    @property
    def boundary(self) -> geo.Boundary:
        return make_boundary(self.boundary_shape, self.kinks)

    def mu(self, t: int, x) -> np.ndarray:
        return eval_poly(self.mu1 if t else self.mu0, x)

    def tau(self, x) -> np.ndarray:
        return self.mu(1, x) - self.mu(0, x)

    def density_at(self, x) -> np.ndarray:
        """Score density on ``[-1, 1]^2``."""
        x = np.asarray(x, dtype=float)
        a = self.tilt if self.density == "tilted" else 0.0
        inside = np.all(np.abs(x) <= 1.0, axis=-1)
        return np.where(inside, (1.0 + a * x[..., 0]) / 4.0, 0.0)

    def with_(self, **kw) -> "DgpSpec":
        return replace(self, **kw)


_KEYS = {"boundary", "mu0", "mu1", "noise_sd", "density", "tilt", "n", "seed"}


def parse_dgp(text: str) -> DgpSpec:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        try:
            if key == "boundary":
                m = re.fullmatch(r"jagged\((\d+)\)", val)
                if m:
                    kw["boundary_shape"], kw["kinks"] = "jagged", int(m.group(1))
                else:
                    kw["boundary_shape"] = val
            elif key in ("mu0", "mu1"):
                kw[key] = parse_poly(val)
            elif key in ("n", "seed"):
                kw[key] = int(val)
            elif key in ("noise_sd", "tilt"):
                kw[key] = float(val)
            else:
                kw[key] = val
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    try:
        return DgpSpec(**kw)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def format_dgp(spec: DgpSpec) -> str:
    shape = f"jagged({spec.kinks})" if spec.boundary_shape == "jagged" else spec.boundary_shape
    return "\n".join([
        f"boundary = {shape}",
        f"mu0 = {format_poly(spec.mu0)}",
        f"mu1 = {format_poly(spec.mu1)}",
        f"noise_sd = {spec.noise_sd:.17g}",
        f"density = {spec.density}",
        f"tilt = {spec.tilt:.17g}",
        f"n = {spec.n}",
        f"seed = {spec.seed}",
    ]) + "\n"


def read_dgp(path) -> DgpSpec:
    with open(path) as fh:
        return parse_dgp(fh.read())


def demo_dgp() -> DgpSpec:
    """The bundled L-boundary demo (first quadrant treated, uniform scores)."""
    text = resources.files("bdd").joinpath("data", "spp-style.dgp").read_text()
    return parse_dgp(text)


# -- sampling -------------------------------------------------------------------------

def sample_scores(spec: DgpSpec, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    n = spec.n if n is None else n
    u = rng.random((n, 2))
    x2 = 2.0 * u[:, 1] - 1.0
    a = spec.tilt if spec.density == "tilted" else 0.0
    if a == 0.0:
        x1 = 2.0 * u[:, 0] - 1.0
    else:
        # invert F(x) = ((x + 1) + a (x^2 - 1) / 2) / 2
        c = 1.0 - a / 2.0 - 2.0 * u[:, 0]
        x1 = (-1.0 + np.sqrt(1.0 - 2.0 * a * c)) / a
    return np.column_stack([x1, x2])


@dataclass
class Truth:
    bate: float
    wbate: float
    lbate: float
    lbate_point: np.ndarray
    lbate_arclength: float
    quad_error: float
    per_segment: list

    def to_dict(self) -> dict:
        return {"bate": self.bate, "wbate": self.wbate, "lbate": self.lbate,
                "lbate_point": self.lbate_point, "lbate_arclength": self.lbate_arclength,
                "quad_error": self.quad_error, "per_segment_bate": self.per_segment}

    def to_json(self) -> str:
        return dumps17(self.to_dict())


def weighted_mean_on(boundary, f, w, n_quad, start=0.0, stop=None) -> float:
    num = geo.line_integral(boundary, lambda x: f(x) * w(x), n_quad, start, stop)
    den = geo.line_integral(boundary, w, n_quad, start, stop)
    return num / den


def _boundary_max(boundary, tau, n_scan=4001):
    s = np.linspace(0.0, boundary.length, n_scan)
    vals = tau(boundary.point_at(s))
    j = int(np.argmax(vals))
    lo, hi = s[max(j - 1, 0)], s[min(j + 1, n_scan - 1)]
    res = minimize_scalar(lambda v: -float(tau(boundary.point_at(v)[None, :])[0]),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    best_s, best = (res.x, -res.fun) if -res.fun >= vals[j] else (s[j], vals[j])
    return float(best), np.asarray(boundary.point_at(best_s)), float(best_s)


def truth(spec: DgpSpec, n_quad: int = TRUTH_QUAD) -> Truth:
    """Quadrature truths; ``quad_error`` compares against half the resolution."""
    b = spec.boundary
    tau, dens = spec.tau, spec.density_at
    one = lambda x: np.ones(len(x))  # noqa: E731
    bate = weighted_mean_on(b, tau, dens, n_quad)
    coarse = weighted_mean_on(b, tau, dens, n_quad // 2)
    wbate = weighted_mean_on(b, tau, one, n_quad)
    lbate, pt, s = _boundary_max(b, tau)
    cum = b.cumulative_arclength
    per = [weighted_mean_on(b, tau, dens, n_quad, cum[k], cum[k + 1])
           for k in range(b.n_segments)]
    return Truth(float(bate), float(wbate), lbate, pt, s, float(abs(bate - coarse)), per)


@dataclass
class Simulation:
    data: Dataset
    truth: Truth
    spec: DgpSpec
    t: np.ndarray


def draw(spec: DgpSpec, rng: np.random.Generator):
    """One sample of ``(y, x, t)`` from ``spec`` using ``rng``."""
    x = sample_scores(spec, rng)
    t = (geo.signed_distances(spec.boundary, x) >= 0).astype(int)
    eps = rng.standard_normal(spec.n)
    y = np.where(t == 1, spec.mu(1, x), spec.mu(0, x)) + spec.noise_sd * eps
    return y, x, t


def simulate(spec: DgpSpec, with_truth: bool = True) -> Simulation:
    """Draw a dataset deterministically from ``spec.seed``."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    y, x, t = draw(spec, rng)
    tr = truth(spec) if with_truth else None
    return Simulation(Dataset(y, x), tr, spec, t)


def seed_for(seed: int, rep: int) -> np.random.SeedSequence:
    """Independent stream for replication ``rep``."""
    return np.random.SeedSequence(seed, spawn_key=(rep,))
