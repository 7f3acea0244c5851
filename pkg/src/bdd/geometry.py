"""Polyline assignment boundaries: projection, signed distance, segments, quadrature.

All public operations accept either a single 2-D point or an ``(n, 2)`` array of
points.  Vectorised variants (``project``, ``regions``, ``signed_distances``, ...)
are the workhorses; the scalar functions wrap them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AnchorOffBoundary, InvalidBoundary, InvalidGrid, ParseError

# relative to total boundary length
ON_BOUNDARY_RTOL = 1e-9
TIE_RTOL = 1e-12
_GL_ORDER = 5
_CHUNK = 2_000_000


class Region(enum.IntEnum):
    A0 = 0
    A1 = 1


def _as_points(q):
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[-1] != 2:
        raise ValueError(f"expected 2-D points, got shape {q.shape}")
    return q, single


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segments_intersect(p1, p2, q1, q2, eps):
    """Closed-segment intersection test with an absolute tolerance."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) <= eps else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
                and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4):
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


@dataclass(frozen=True)
class Boundary:
    """Oriented, simple, piecewise-linear assignment boundary.

    Parameters
    ----------
    vertices : array_like, shape (m, 2)
        Ordered vertices in score units.
    closed : bool
        If True the last vertex connects back to the first.
    treated_side : {"left", "right"}
        Side of the oriented curve forming the treated region.  Points on the
        curve itself are always treated.
    """

    vertices: np.ndarray
    closed: bool = False
    treated_side: str = "left"
    cumulative_arclength: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidBoundary("vertices must have shape (m, 2)")
        if not np.all(np.isfinite(v)):
            raise InvalidBoundary("vertices must be finite")
        if self.closed and len(v) > 1 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 2:
            raise InvalidBoundary("a boundary needs at least 2 vertices")
        if self.closed and len(v) < 3:
            raise InvalidBoundary("a closed boundary needs at least 3 vertices")
        if self.treated_side not in ("left", "right"):
            raise InvalidBoundary("treated_side must be 'left' or 'right'")
        ends = np.roll(v, -1, axis=0) if self.closed else v[1:]
        starts = v if self.closed else v[:-1]
        seg_len = np.hypot(*(ends - starts).T)
        if np.any(seg_len <= 0):
            raise InvalidBoundary("consecutive vertices must be distinct")
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        for arr in (v, starts, ends, seg_len, cum):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cumulative_arclength", cum)
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_ends", ends)
        object.__setattr__(self, "_seg_len", seg_len)
        self._check_simple()

    # -- basic structure ---------------------------------------------------
    @property
    def starts(self) -> np.ndarray:
        return self._starts

    @property
    def ends(self) -> np.ndarray:
        return self._ends

    @property
    def segment_lengths(self) -> np.ndarray:
        return self._seg_len

    @property
    def n_segments(self) -> int:
        return len(self._seg_len)

    @property
    def length(self) -> float:
        return float(self.cumulative_arclength[-1])

    @property
    def tol(self) -> float:
        """On-boundary tolerance (score units)."""
        return ON_BOUNDARY_RTOL * self.length

    @property
    def side_sign(self) -> int:
        return 1 if self.treated_side == "left" else -1

    def flipped(self) -> "Boundary":
        """Same curve with the treated side swapped."""
        side = "right" if self.treated_side == "left" else "left"
        return Boundary(self.vertices, self.closed, side)

    def _check_simple(self):
        k = self.n_segments
        eps = 1e-12 * max(self.length, 1.0) ** 2
        S, E = self._starts, self._ends
        for i in range(k):
            for j in range(i + 1, k):
                adjacent = j == i + 1 or (self.closed and i == 0 and j == k - 1)
                if adjacent:
                    # shared vertex only; reject fold-backs onto the previous segment
                    a, b = (i, j) if j == i + 1 else (j, i)
                    din, dout = E[a] - S[a], E[b] - S[b]
                    if abs(_cross(din, dout)) <= eps and np.dot(din, dout) < 0:
                        raise InvalidBoundary(f"segments {a} and {b} fold back on each other")
                    continue
                if _segments_intersect(S[i], E[i], S[j], E[j], eps):
                    raise InvalidBoundary(f"boundary self-intersects (segments {i}, {j})")

    # -- arclength parametrisation -------------------------------------------
    def point_at(self, s):
        """Points at arclength(s) ``s`` (clipped to ``[0, length]``)."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        idx = np.clip(np.searchsorted(self.cumulative_arclength, s, side="right") - 1,
                      0, self.n_segments - 1)
        t = (s - self.cumulative_arclength[idx]) / self._seg_len[idx]
        pts = self._starts[idx] + t[..., None] * (self._ends[idx] - self._starts[idx])
        return pts

    def interior_angles(self) -> np.ndarray:
        """Angle (radians, in ``(0, pi]``) at each interior vertex; pi for straight."""
        k = self.n_segments
        pairs = range(k) if self.closed else range(k - 1)
        out = []
        for i in pairs:
            j = (i + 1) % k
            din = self._ends[i] - self._starts[i]
            dout = self._ends[j] - self._starts[j]
            turn = math.atan2(_cross(din, dout), float(np.dot(din, dout)))
            out.append(math.pi - abs(turn))
        return np.array(out)


@dataclass(frozen=True)
class SegmentPartition:
    """Arclength breakpoints ``0 = s_0 < ... < s_L = |B|`` cutting B into L pieces."""

    breakpoints: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise InvalidBoundary("partition needs at least two breakpoints")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise InvalidBoundary("partition breakpoints must start at 0 and increase strictly")
        b.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)

    @property
    def L(self) -> int:
        return len(self.breakpoints) - 1

    @classmethod
    def whole(cls, boundary: Boundary) -> "SegmentPartition":
        return cls([0.0, boundary.length])

    @classmethod
    def from_interior(cls, boundary: Boundary, interior) -> "SegmentPartition":
        interior = [float(s) for s in interior]
        if any(not 0.0 < s < boundary.length for s in interior):
            raise InvalidBoundary("interior breakpoints must lie strictly inside (0, |B|)")
        return cls([0.0, *interior, boundary.length])

    @classmethod
    def at_vertices(cls, boundary: Boundary) -> "SegmentPartition":
        """One piece per polyline segment."""
        return cls(boundary.cumulative_arclength)

    @classmethod
    def uniform(cls, boundary: Boundary, L: int) -> "SegmentPartition":
        return cls(np.linspace(0.0, boundary.length, L + 1))

    def check(self, boundary: Boundary):
        if abs(self.breakpoints[-1] - boundary.length) > boundary.tol:
            raise InvalidBoundary("last breakpoint must equal the boundary length")


@dataclass(frozen=True)
class Projection:
    point: np.ndarray
    arclength: float
    distance: float


@dataclass(frozen=True)
class ProjectionArrays:
    point: np.ndarray      # (n, 2)
    arclength: np.ndarray  # (n,)
    distance: np.ndarray   # (n,)
    segment: np.ndarray    # (n,) int
    t: np.ndarray          # (n,) position within segment


def _project_chunk(boundary: Boundary, q):
    A = boundary.starts[None, :, :]
    V = (boundary.ends - boundary.starts)[None, :, :]
    rel = q[:, None, :] - A
    t = np.clip(np.einsum("nkj,kj->nk", rel, V[0]) / boundary.segment_lengths[None, :] ** 2,
                0.0, 1.0)
    foot = A + t[..., None] * V
    dist = np.hypot(*(q[:, None, :] - foot).transpose(2, 0, 1))
    arc = boundary.cumulative_arclength[None, :-1] + t * boundary.segment_lengths[None, :]
    dmin = dist.min(axis=1, keepdims=True)
    tied = dist <= dmin + TIE_RTOL * boundary.length
    seg = np.argmin(np.where(tied, arc, np.inf), axis=1)
    rows = np.arange(len(q))
    return (foot[rows, seg], arc[rows, seg], dist[rows, seg], seg, t[rows, seg])


def project(boundary: Boundary, points) -> ProjectionArrays:
    """Nearest boundary point for every query; ties go to the smallest arclength."""
    q, _ = _as_points(points)
    step = max(1, _CHUNK // boundary.n_segments)
    parts = [_project_chunk(boundary, q[i:i + step]) for i in range(0, len(q), step)]
    if not parts:
        z = np.zeros(0)
        return ProjectionArrays(np.zeros((0, 2)), z, z, np.zeros(0, int), z)
    cols = [np.concatenate(c) for c in zip(*parts)]
    return ProjectionArrays(*cols)


def closest_point(boundary: Boundary, query) -> Projection:
    pr = project(boundary, query)
    return Projection(pr.point[0], float(pr.arclength[0]), float(pr.distance[0]))


def _side_from_projection(boundary: Boundary, q, pr: ProjectionArrays):
    """+1 left of the oriented curve, -1 right, 0 undetermined (ties the treated side)."""
    S, E = boundary.starts, boundary.ends
    k = boundary.n_segments
    m = len(boundary.vertices)
    seg, t = pr.segment, pr.t
    side = np.sign(_cross(E[seg] - S[seg], q - S[seg]))

    at_vertex = (t <= 0.0) | (t >= 1.0)
    if np.any(at_vertex):
        vidx = np.where(t <= 0.0, seg, seg + 1)
        if boundary.closed:
            vidx = vidx % m
            interior = at_vertex
        else:
            interior = at_vertex & (vidx > 0) & (vidx < m - 1)
        # open endpoints keep the half-plane sign of their only segment
        ii = np.nonzero(interior)[0]
        if len(ii):
            v_i = vidx[ii]
            seg_out = v_i % k
            seg_in = (v_i - 1) % k
            d_in = E[seg_in] - S[seg_in]
            d_out = E[seg_out] - S[seg_out]
            u = q[ii] - boundary.vertices[v_i]
            a_u = np.mod(np.arctan2(_cross(d_out, u), np.einsum("ij,ij->i", d_out, u)), 2 * np.pi)
            a_lim = np.mod(np.arctan2(_cross(d_out, -d_in), np.einsum("ij,ij->i", d_out, -d_in)),
                           2 * np.pi)
            left = (a_u > 0) & (a_u < a_lim)
            side[ii] = np.where(left, 1.0, -1.0)
    return side


def regions(boundary: Boundary, points) -> np.ndarray:
    """Region labels (0 = A0, 1 = A1) for an array of points."""
    q, _ = _as_points(points)
    pr = project(boundary, q)
    return _regions_from(boundary, q, pr)


def _regions_from(boundary, q, pr):
    side = _side_from_projection(boundary, q, pr)
    treated = (side == boundary.side_sign) | (side == 0) | (pr.distance <= boundary.tol)
    return treated.astype(int)


def region_of(boundary: Boundary, query) -> Region:
    return Region(int(regions(boundary, query)[0]))


def signed_distances(boundary: Boundary, points, projection: ProjectionArrays | None = None):
    """Signed distance to the boundary: positive in A1, negative in A0, +0 on B."""
    q, _ = _as_points(points)
    pr = project(boundary, q) if projection is None else projection
    treated = _regions_from(boundary, q, pr)
    d = np.where(pr.distance <= boundary.tol, 0.0, pr.distance)
    return np.where(treated == 1, d, -d)


def signed_distance(boundary: Boundary, query) -> float:
    return float(signed_distances(boundary, query)[0])


def check_on_boundary(boundary: Boundary, anchor) -> np.ndarray:
    anchor = np.asarray(anchor, dtype=float)
    d = closest_point(boundary, anchor).distance
    if d > boundary.tol:
        raise AnchorOffBoundary(f"anchor {anchor.tolist()} is {d:.3g} away from the boundary")
    return anchor


def signed_distances_to_point(boundary: Boundary, anchor, points, treated=None):
    """Signed Euclidean distance from each query to a fixed boundary point.

    ``treated`` (0/1 per point) may be supplied to skip re-classifying the queries.
    """
    anchor = check_on_boundary(boundary, anchor)
    q, _ = _as_points(points)
    if treated is None:
        treated = regions(boundary, q)
    r = np.hypot(*(q - anchor).T)
    return np.where(np.asarray(treated) == 1, r, -r)


def signed_distance_to_point(boundary: Boundary, anchor, query) -> float:
    return float(signed_distances_to_point(boundary, anchor, query)[0])


def _piece_segments(boundary: Boundary, partition: SegmentPartition):
    """Sub-segments (start, end, piece index) of each partition piece."""
    cum = boundary.cumulative_arclength
    starts, ends, owner = [], [], []
    for ell in range(partition.L):
        a, b = partition.breakpoints[ell], partition.breakpoints[ell + 1]
        cuts = [a, *[s for s in cum if a < s < b], b]
        for s0, s1 in zip(cuts[:-1], cuts[1:]):
            starts.append(boundary.point_at(s0))
            ends.append(boundary.point_at(s1))
            owner.append(ell)
    return np.array(starts), np.array(ends), np.array(owner)


def segment_assign_many(partition: SegmentPartition, boundary: Boundary, points) -> np.ndarray:
    """Nearest piece index (1-based) per point; exact ties take the smallest index."""
    partition.check(boundary)
    q, _ = _as_points(points)
    S, E, owner = _piece_segments(boundary, partition)
    out = np.empty(len(q), dtype=int)
    step = max(1, _CHUNK // len(S))
    V = E - S
    len2 = np.einsum("ij,ij->i", V, V)
    for i in range(0, len(q), step):
        qq = q[i:i + step]
        rel = qq[:, None, :] - S[None]
        t = np.clip(np.einsum("nkj,kj->nk", rel, V) / len2, 0.0, 1.0)
        d = np.hypot(*(rel - t[..., None] * V[None]).transpose(2, 0, 1))
        per_piece = np.full((len(qq), partition.L), np.inf)
        for ell in range(partition.L):
            per_piece[:, ell] = d[:, owner == ell].min(axis=1)
        dmin = per_piece.min(axis=1, keepdims=True)
        tied = per_piece <= dmin + TIE_RTOL * boundary.length
        out[i:i + step] = np.argmax(tied, axis=1) + 1
    return out


def segment_assign(partition: SegmentPartition, boundary: Boundary, query) -> int:
    return int(segment_assign_many(partition, boundary, query)[0])


def discretize(boundary: Boundary, J: int):
    """``J`` evenly spaced boundary points and their arclengths.

    Open curves include both endpoints (spacing ``|B|/(J-1)``); closed curves use
    spacing ``|B|/J`` starting at the first vertex.
    """
    J = int(J)
    if boundary.closed:
        if J < 1:
            raise InvalidGrid("closed boundaries need J >= 1")
        s = np.arange(J) * boundary.length / J
    else:
        if J < 2:
            raise InvalidGrid("open boundaries need J >= 2")
        s = np.arange(J) * boundary.length / (J - 1)
        s[-1] = boundary.length
    return boundary.point_at(s), s


def _eval_m(m, pts):
    vals = np.asarray(m(pts), dtype=float)
    if vals.ndim == 0:
        return np.full(len(pts), float(vals))
    if vals.shape != (len(pts),):
        vals = np.array([float(m(p)) for p in pts])
    return vals


def line_integral(boundary: Boundary, m, n_quad: float = 200.0, start: float = 0.0,
                  stop: float | None = None) -> float:
    """Integral of ``m`` along the boundary with respect to arclength.

    Composite 5-point Gauss-Legendre on each segment, with about ``n_quad``
    nodes per unit length.  ``m`` receives an ``(N, 2)`` array of points.
    ``start``/``stop`` restrict the integral to an arclength interval.
    """
    stop = boundary.length if stop is None else stop
    nodes, weights = np.polynomial.legendre.leggauss(_GL_ORDER)
    cum = boundary.cumulative_arclength
    all_s, all_w = [], []
    for k in range(boundary.n_segments):
        a, b = max(cum[k], start), min(cum[k + 1], stop)
        if b <= a:
            continue
        panels = max(1, math.ceil(n_quad * (b - a) / _GL_ORDER))
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        all_s.append((mid[:, None] + half[:, None] * nodes[None, :]).ravel())
        all_w.append((half[:, None] * weights[None, :]).ravel())
    if not all_s:
        return 0.0
    s = np.concatenate(all_s)
    w = np.concatenate(all_w)
    # evaluate inside each segment (avoid snapping onto the neighbour at a vertex)
    seg = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, boundary.n_segments - 1)
    t = (s - cum[seg]) / boundary.segment_lengths[seg]
    pts = boundary.starts[seg] + t[:, None] * (boundary.ends[seg] - boundary.starts[seg])
    return float(np.dot(w, _eval_m(m, pts)))


def side_sectors(boundary: Boundary, b):
    """Angular intervals of treated and control directions at boundary point ``b``.

    Returns two lists of ``(theta_lo, theta_hi)`` pairs (radians, ``hi > lo``)
    describing the local cone of each region at ``b``.
    """
    b = check_on_boundary(boundary, b)
    pr = project(boundary, b)
    seg, t = int(pr.segment[0]), float(pr.t[0])
    S, E = boundary.starts, boundary.ends
    k, m = boundary.n_segments, len(boundary.vertices)
    vtol = boundary.tol / boundary.segment_lengths[seg]
    vidx = None
    if t <= vtol:
        vidx = seg
    elif t >= 1 - vtol:
        vidx = seg + 1
    if vidx is not None:
        if boundary.closed:
            vidx %= m
        elif vidx in (0, m - 1):
            vidx = None
            seg = 0 if t <= vtol else k - 1
    if vidx is None:
        d = E[seg] - S[seg]
        phi = math.atan2(d[1], d[0])
        left = [(phi, phi + math.pi)]
        right = [(phi + math.pi, phi + 2 * math.pi)]
    else:
        d_in = E[(vidx - 1) % k] - S[(vidx - 1) % k]
        d_out = E[vidx % k] - S[vidx % k]
        phi = math.atan2(d_out[1], d_out[0])
        lim = math.atan2(_cross(d_out, -d_in), float(np.dot(d_out, -d_in))) % (2 * math.pi)
        left = [(phi, phi + lim)]
        right = [(phi + lim, phi + 2 * math.pi)]
    return (left, right) if boundary.side_sign == 1 else (right, left)


# -- text format -----------------------------------------------------------------

def read_boundary(path):
    """Parse the line-oriented boundary format.

    Returns ``(boundary, partition)``; ``partition`` is the single-piece
    partition when the file has no ``partition`` line.
    """
    text = Path(path).read_text()
    return parse_boundary(text)


def parse_boundary(text: str):
    header = None
    verts, interior = [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if header is None:
            if tokens[0] != "boundary" or len(tokens) < 2:
                raise ParseError("expected header 'boundary open|closed treated_side=...'", lineno)
            if tokens[1] not in ("open", "closed"):
                raise ParseError(f"unknown boundary kind {tokens[1]!r}", lineno)
            side = "left"
            for tok in tokens[2:]:
                key, _, val = tok.partition("=")
                if key != "treated_side" or val not in ("left", "right"):
                    raise ParseError(f"bad header token {tok!r}", lineno)
                side = val
            header = (tokens[1] == "closed", side)
            continue
        if tokens[0] == "partition":
            try:
                interior = [float(x) for x in tokens[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            continue
        if len(tokens) != 2:
            raise ParseError("expected 'x1 x2'", lineno)
        try:
            pt = (float(tokens[0]), float(tokens[1]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not all(map(math.isfinite, pt)):
            raise ParseError("non-finite coordinate", lineno)
        verts.append(pt)
    if header is None:
        raise ParseError("missing boundary header")
    boundary = Boundary(np.array(verts), closed=header[0], treated_side=header[1])
    if interior:
        partition = SegmentPartition.from_interior(boundary, interior)
    else:
        partition = SegmentPartition.whole(boundary)
    return boundary, partition


def format_boundary(boundary: Boundary, partition: SegmentPartition | None = None) -> str:
    kind = "closed" if boundary.closed else "open"
    lines = [f"boundary {kind} treated_side={boundary.treated_side}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in boundary.vertices]
    if partition is not None and partition.L > 1:
        lines.append("partition " + " ".join(f"{s:.17g}" for s in partition.breakpoints[1:-1]))
    return "\n".join(lines) + "\n"


def write_boundary(path, boundary: Boundary, partition: SegmentPartition | None = None):
    Path(path).write_text(format_boundary(boundary, partition))
