"""Sampled curves and the geometric oracles used to check the estimator.

Everything here is independent of the adaptive quadrature in
:mod:`levelmeasure.estimator`: lengths are plain polyline sums, tube areas are
grid counts, arc lengths use fixed composite Simpson.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .expr import Expression

__all__ = [
    "CurveError",
    "SampledCurve",
    "SegmentIndex",
    "ReachEstimate",
    "polyline_length",
    "distance_and_foot",
    "reach_estimate",
    "tube_volume",
    "arc_length_graph",
    "zero_set_trace",
    "TraceResult",
    "circle_curve",
    "polygon_curve",
    "read_curve_csv",
    "write_curve_csv",
]


class CurveError(ValueError):
    """A curve violates the SampledCurve invariants."""


def _segment_endpoints(points: np.ndarray, closed: bool) -> tuple[np.ndarray, np.ndarray]:
    if closed:
        return points, np.roll(points, -1, axis=0)
    return points[:-1], points[1:]


def _segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Vectorised closed-segment intersection test (touching counts)."""

    def orient(a, b, c):
        return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])

    def on_seg(a, b, c):
        return (
            (np.minimum(a[:, 0], b[:, 0]) <= c[:, 0])
            & (c[:, 0] <= np.maximum(a[:, 0], b[:, 0]))
            & (np.minimum(a[:, 1], b[:, 1]) <= c[:, 1])
            & (c[:, 1] <= np.maximum(a[:, 1], b[:, 1]))
        )

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    proper = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)
    touch = (
        ((d1 == 0) & on_seg(q1, q2, p1))
        | ((d2 == 0) & on_seg(q1, q2, p2))
        | ((d3 == 0) & on_seg(p1, p2, q1))
        | ((d4 == 0) & on_seg(p1, p2, q2))
    )
    return proper | touch


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """Ordered points in the plane, open or closed.

    Validation on construction: enough points, distinct consecutive points and
    (unless ``check_simple=False``) no intersections between non-adjacent
    segments.
    """

    points: np.ndarray
    closed: bool = True
    check_simple: bool = field(default=True, repr=False)

    def __post_init__(self):
        if isinstance(self.points, (list, tuple)) and self.points and isinstance(
            self.points[0], SampledCurve
        ):
            raise CurveError("a SampledCurve holds a single curve only")
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise CurveError("a SampledCurve holds a single curve of 2D points")
        if not np.all(np.isfinite(pts)):
            raise CurveError("curve points must be finite")
        need = 3 if self.closed else 2
        if len(pts) < need:
            raise CurveError(f"{'closed' if self.closed else 'open'} curve needs >= {need} points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        diam = self.diameter
        a, b = _segment_endpoints(pts, self.closed)
        seg_len = np.hypot(*(b - a).T)
        if np.any(seg_len <= 1e-12 * diam) or diam == 0:
            i = int(np.argmin(seg_len))
            raise CurveError(f"consecutive points {i} and {(i + 1) % len(pts)} coincide")
        if self.check_simple:
            self._check_simple(a, b, seg_len)

    @property
    def diameter(self) -> float:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    @property
    def n_segments(self) -> int:
        return len(self.points) if self.closed else len(self.points) - 1

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        return _segment_endpoints(self.points, self.closed)

    def _check_simple(self, a, b, seg_len):
        n = len(a)
        if n < 3:
            return
        mid = 0.5 * (a + b)
        pairs = cKDTree(mid).query_pairs(r=float(seg_len.max()) * (1 + 1e-9), output_type="ndarray")
        if len(pairs) == 0:
            return
        i, j = pairs[:, 0], pairs[:, 1]
        gap = np.abs(i - j)
        if self.closed:
            gap = np.minimum(gap, n - gap)
        keep = gap > 1
        i, j = i[keep], j[keep]
        hit = _segments_intersect(a[i], b[i], a[j], b[j])
        if np.any(hit):
            k = int(np.flatnonzero(hit)[0])
            raise CurveError(f"curve self-intersects: segments {i[k]} and {j[k]}")

    def scaled(self, s: float) -> "SampledCurve":
        return SampledCurve(self.points * s, self.closed, self.check_simple)


def circle_curve(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> SampledCurve:
    """Regular n-gon inscribed in a circle."""
    theta = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)])
    return SampledCurve(pts, closed=True)


def polygon_curve(vertices: Sequence[Sequence[float]]) -> SampledCurve:
    return SampledCurve(np.asarray(vertices, dtype=float), closed=True)


# --------------------------------------------------------------------------
# exact point-to-polyline distance


class SegmentIndex:
    """Exact nearest-segment queries against one or more polylines.

    Candidates come from a KD-tree over the vertices: if the nearest segment is
    at distance ``d`` then one of its endpoints lies within ``d + L/2`` of the
    query (``L`` = longest segment). Candidate sets are enlarged until that
    bound certifies the answer, with brute force as the last resort.
    """

    def __init__(self, curves: Iterable[SampledCurve]):
        curves = list(curves)
        if not curves:
            raise CurveError("at least one curve required")
        a_parts, b_parts, vs_parts, verts = [], [], [], []
        seg_off = vert_off = 0
        for c in curves:
            a, b = c.segments()
            nv, ns = len(c.points), len(a)
            vs = np.full((nv, 2), -1, dtype=np.int64)
            # vertex v is the start of segment v and the end of segment v-1
            vs[:ns, 0] = np.arange(ns)
            if c.closed:
                vs[:, 1] = (np.arange(nv) - 1) % ns
            else:
                vs[1:, 1] = np.arange(nv - 1)
            vs[vs >= 0] += seg_off
            a_parts.append(a)
            b_parts.append(b)
            vs_parts.append(vs)
            verts.append(c.points)
            seg_off += ns
            vert_off += nv
        self.a = np.concatenate(a_parts)
        self.b = np.concatenate(b_parts)
        self.ab = self.b - self.a
        self.len2 = np.einsum("ij,ij->i", self.ab, self.ab)
        self.vertex_segments = np.concatenate(vs_parts)
        self.vertices = np.concatenate(verts)
        self.tree = cKDTree(self.vertices)
        self.half_max_len = 0.5 * math.sqrt(float(self.len2.max()))
        self.n_segments = len(self.a)

    def _project(self, p: np.ndarray, seg: np.ndarray):
        """Distances and feet from points p (M,2) to segments seg (M,C)."""
        a = self.a[seg]
        ab = self.ab[seg]
        t = np.einsum("mcj,mcj->mc", p[:, None, :] - a, ab) / self.len2[seg]
        np.clip(t, 0.0, 1.0, out=t)
        foot = a + t[..., None] * ab
        d = np.hypot(p[:, None, 0] - foot[..., 0], p[:, None, 1] - foot[..., 1])
        return d, foot

    def _pick(self, p, seg):
        valid = seg >= 0
        segc = np.where(valid, seg, 0)
        d, foot = self._project(p, segc)
        d = np.where(valid, d, np.inf)
        dmin = d.min(axis=1)
        big = np.iinfo(np.int64).max
        idx = np.where(d == dmin[:, None], segc, big).min(axis=1)
        col = np.argmax((segc == idx[:, None]) & valid & (d == dmin[:, None]), axis=1)
        rows = np.arange(len(p))
        return dmin, foot[rows, col], idx

    def _brute(self, p):
        m = len(p)
        dist = np.empty(m)
        foot = np.empty((m, 2))
        seg = np.empty(m, dtype=np.int64)
        chunk = max(1, 2_000_000 // max(self.n_segments, 1))
        all_seg = np.arange(self.n_segments)
        for s in range(0, m, chunk):
            q = p[s : s + chunk]
            cand = np.broadcast_to(all_seg, (len(q), self.n_segments))
            dist[s : s + chunk], foot[s : s + chunk], seg[s : s + chunk] = self._pick(q, cand)
        return dist, foot, seg

    def query(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (distance, foot point, segment index) for each query point.

        Ties between equidistant segments go to the lowest segment index.
        """
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        m = len(p)
        nv = len(self.vertices)
        if m * self.n_segments <= 4_000_000 or nv <= 16:
            return self._brute(p)
        dist = np.empty(m)
        foot = np.empty((m, 2))
        seg = np.empty(m, dtype=np.int64)
        todo = np.arange(m)
        for k in (4, 16, 64):
            if len(todo) == 0:
                break
            k = min(k, nv)
            dv, iv = self.tree.query(p[todo], k=k)
            cand = self.vertex_segments[iv].reshape(len(todo), 2 * k)
            d, f, s = self._pick(p[todo], cand)
            ok = (dv[:, -1] > d + self.half_max_len) | (k == nv)
            dist[todo[ok]], foot[todo[ok]], seg[todo[ok]] = d[ok], f[ok], s[ok]
            todo = todo[~ok]
        if len(todo):
            dist[todo], foot[todo], seg[todo] = self._brute(p[todo])
        return dist, foot, seg

    def within(self, points, eps: float) -> np.ndarray:
        """Boolean mask of points at distance <= eps."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        dv, _ = self.tree.query(p, k=1, distance_upper_bound=eps + self.half_max_len)
        near = np.isfinite(dv)
        out = np.zeros(len(p), dtype=bool)
        if np.any(near):
            idx = np.flatnonzero(near)
            out[idx] = self.query(p[idx])[0] <= eps
        return out


def polyline_length(c: SampledCurve) -> float:
    a, b = c.segments()
    return math.fsum(np.hypot(*(b - a).T))


def distance_and_foot(c: SampledCurve, p) -> tuple[float, np.ndarray, int]:
    d, foot, seg = SegmentIndex([c]).query(np.asarray(p, dtype=float)[None, :])
    return float(d[0]), foot[0], int(seg[0])


# --------------------------------------------------------------------------
# reach


@dataclass(frozen=True)
class ReachEstimate:
    local: float
    global_: float
    reach: float
    kappa_hat: float

    @property
    def global_bound(self) -> float:
        return self.global_


def reach_estimate(c: SampledCurve) -> ReachEstimate:
    """Discrete reach: min of the curvature bound and half the bottleneck.

    The local part is ``1 / max kappa_i`` with ``kappa_i = 2 sin(theta_i/2)/l_i``.
    The global part is half the shortest chord between samples at least three
    indices apart whose direction is normal to the curve at both ends, up to
    the angular resolution of the sampling, and whose endpoints are at least
    1.5 chord lengths apart along the curve.
    """
    if not isinstance(c, SampledCurve):
        raise CurveError("reach estimate takes a single curve")
    if not c.closed:
        raise CurveError("reach estimate needs a closed curve")
    pts = c.points
    n = len(pts)
    if n < 8:
        raise CurveError("reach estimate needs at least 8 points")
    nxt = np.roll(pts, -1, axis=0)
    prv = np.roll(pts, 1, axis=0)
    e_in = pts - prv
    e_out = nxt - pts
    l_in = np.hypot(*e_in.T)
    l_out = np.hypot(*e_out.T)
    cross = e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0]
    dot = np.einsum("ij,ij->i", e_in, e_out)
    theta = np.abs(np.arctan2(cross, dot))
    ell = 0.5 * (l_in + l_out)
    kappa = 2.0 * np.sin(theta / 2.0) / ell
    kmax = float(kappa.max())
    local = math.inf if kmax == 0 else 1.0 / kmax

    tangent = nxt - prv
    tangent /= np.hypot(*tangent.T)[:, None]
    arc = np.concatenate([[0.0], np.cumsum(l_out[:-1])])
    perimeter = float(l_out.sum())
    best = math.inf
    idx = np.arange(n)
    rows = max(1, 1_000_000 // n)
    for s in range(0, n, rows):
        i = idx[s : s + rows]
        u = pts[None, :, :] - pts[i, None, :]
        ulen = np.hypot(u[..., 0], u[..., 1])
        gap = np.abs(i[:, None] - idx[None, :])
        gap = np.minimum(gap, n - gap)
        with np.errstate(divide="ignore", invalid="ignore"):
            ci = np.abs(np.einsum("rcj,rj->rc", u, tangent[i])) / ulen
            cj = np.abs(np.einsum("rcj,cj->rc", u, tangent)) / ulen
            tol = (ell[i, None] + ell[None, :]) / ulen + theta[i, None] + theta[None, :]
        along = np.abs(arc[i, None] - arc[None, :])
        along = np.minimum(along, perimeter - along)
        # a bottleneck chord spans at least pi/2 times its length along the curve
        ok = (gap >= 3) & (along >= 1.5 * ulen) & (ci <= tol) & (cj <= tol)
        if np.any(ok):
            best = min(best, float(ulen[ok].min()))
    glob = 0.5 * best
    reach = min(local, glob)
    return ReachEstimate(local=local, global_=glob, reach=reach, kappa_hat=1.0 / reach)


# --------------------------------------------------------------------------
# tube area


def _count_rows(index: SegmentIndex, xs, ys, eps) -> int:
    gx, gy = np.meshgrid(xs, ys)
    return int(np.count_nonzero(index.within(np.column_stack([gx.ravel(), gy.ravel()]), eps)))


def tube_volume(c: SampledCurve | Sequence[SampledCurve], epsilon: float, h: float, threads: int = 1) -> float:
    """Area of the closed epsilon-neighbourhood, by counting h-grid midpoints."""
    if epsilon <= 0 or h <= 0:
        raise ValueError("epsilon and h must be positive")
    curves = [c] if isinstance(c, SampledCurve) else list(c)
    index = SegmentIndex(curves)
    allpts = np.concatenate([cv.points for cv in curves])
    lo = allpts.min(axis=0) - epsilon
    hi = allpts.max(axis=0) + epsilon
    nx = int(math.ceil((hi[0] - lo[0]) / h))
    ny = int(math.ceil((hi[1] - lo[1]) / h))
    xs = lo[0] + (np.arange(nx) + 0.5) * h
    ys = lo[1] + (np.arange(ny) + 0.5) * h
    rows_per = max(1, 500_000 // max(nx, 1))
    blocks = [ys[s : s + rows_per] for s in range(0, ny, rows_per)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            counts = list(ex.map(lambda yb: _count_rows(index, xs, yb, epsilon), blocks))
    else:
        counts = [_count_rows(index, xs, yb, epsilon) for yb in blocks]
    # integer counts: the total is independent of the row partition
    return sum(counts) * h * h


# --------------------------------------------------------------------------
# arc length of a graph


def arc_length_graph(e: Expression, a: float, b: float, n: int = 1024) -> float:
    """Composite Simpson estimate of the length of the graph of e over [a, b].

    ``n`` is the number of subintervals; odd values are rounded up.
    """
    if e.dim != 1:
        raise ValueError("arc length needs a one-variable expression")
    if not a < b:
        raise ValueError("need a < b")
    if n < 2:
        raise ValueError("need n >= 2")
    n += n % 2
    x = np.linspace(a, b, n + 1)
    _, grad = e.evaluate(x[:, None])
    g = np.sqrt(1.0 + grad[:, 0] ** 2)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (b - a) / (3.0 * n) * math.fsum(w * g)


# --------------------------------------------------------------------------
# marching squares


@dataclass
class TraceResult:
    curves: list[SampledCurve]
    empty: bool
    degenerate: int = 0  # chains dropped because they had too few distinct points

    def __iter__(self):
        return iter(self.curves)

    def __len__(self):
        return len(self.curves)

    def __getitem__(self, i):
        return self.curves[i]


def zero_set_trace(f, bbox: Sequence[float], h: float) -> TraceResult:
    """Marching-squares polylines of ``f = 0`` inside ``bbox = (xmin, ymin, xmax, ymax)``.

    Node values >= 0 count as positive. Saddle cells are split according to
    the sign of f at the cell centre. Chains are stitched through shared grid
    edges, so closure is decided topologically.
    """
    if getattr(f, "dim", 2) != 2:
        raise ValueError("zero set tracing needs a 2D field")
    if h <= 0:
        raise ValueError("h must be positive")
    xmin, ymin, xmax, ymax = map(float, bbox)
    nx = max(1, int(round((xmax - xmin) / h)))
    ny = max(1, int(round((ymax - ymin) / h)))
    xs = xmin + h * np.arange(nx + 1)
    ys = ymin + h * np.arange(ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    v = np.asarray(f.evaluate(np.column_stack([gx.ravel(), gy.ravel()]))).reshape(nx + 1, ny + 1)
    pos = v >= 0

    bl = pos[:-1, :-1]
    br = pos[1:, :-1]
    tr = pos[1:, 1:]
    tl = pos[:-1, 1:]
    case = bl * 1 + br * 2 + tr * 4 + tl * 8
    ci, cj = np.nonzero((case != 0) & (case != 15))
    if len(ci) == 0:
        return TraceResult([], empty=True)

    saddle = (case[ci, cj] == 5) | (case[ci, cj] == 10)
    centre_pos = np.zeros(len(ci), dtype=bool)
    if np.any(saddle):
        c = np.column_stack([xmin + (ci[saddle] + 0.5) * h, ymin + (cj[saddle] + 0.5) * h])
        centre_pos[saddle] = np.asarray(f.evaluate(c)) >= 0

    # edge keys: ('h', i, j) joins nodes (i,j)-(i+1,j); ('v', i, j) joins (i,j)-(i,j+1)
    def edge_point(key):
        kind, i, j = key
        if kind == "h":
            a, b = v[i, j], v[i + 1, j]
            t = a / (a - b)
            return (xs[i] + t * h, ys[j])
        a, b = v[i, j], v[i, j + 1]
        t = a / (a - b)
        return (xs[i], ys[j] + t * h)

    links: dict[tuple, list[tuple]] = {}

    def link(e1, e2):
        links.setdefault(e1, []).append(e2)
        links.setdefault(e2, []).append(e1)

    for n_, (i, j) in enumerate(zip(ci.tolist(), cj.tolist())):
        k = int(case[i, j])
        bottom, right, top, left = ("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j)
        if k in (5, 10):
            bl_pos = bool(bl[i, j])
            if centre_pos[n_] == bl_pos:
                link(bottom, right)
                link(top, left)
            else:
                link(left, bottom)
                link(right, top)
            continue
        crossing = []
        if bl[i, j] != br[i, j]:
            crossing.append(bottom)
        if br[i, j] != tr[i, j]:
            crossing.append(right)
        if tr[i, j] != tl[i, j]:
            crossing.append(top)
        if tl[i, j] != bl[i, j]:
            crossing.append(left)
        link(*crossing)

    curves = []
    degenerate = 0
    seen: set = set()
    # open chains start at degree-1 edges (on the bbox boundary)
    starts = [e for e, nb in links.items() if len(nb) == 1] + list(links)
    for start in starts:
        if start in seen:
            continue
        chain = [start]
        seen.add(start)
        prev, cur = None, start
        closed = False
        while True:
            nxt = [e for e in links[cur] if e != prev]
            if not nxt:
                break
            e = nxt[0]
            if e == start:
                closed = True
                break
            if e in seen:
                break
            chain.append(e)
            seen.add(e)
            prev, cur = cur, e
        pts = np.array([edge_point(e) for e in chain])
        # drop duplicate consecutive points (crossings exactly at nodes)
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 1e-12 * h, axis=1)
        pts = pts[keep]
        if closed and len(pts) > 1 and np.all(np.abs(pts[0] - pts[-1]) <= 1e-6 * h):
            pts = pts[:-1]
        try:
            curves.append(SampledCurve(pts, closed=closed and len(pts) >= 3, check_simple=False))
        except ValueError:
            degenerate += 1
    return TraceResult(curves, empty=False, degenerate=degenerate)


# --------------------------------------------------------------------------
# CSV i/o


def read_curve_csv(path) -> SampledCurve:
    """Read ``x,y`` rows with an optional trailing ``# closed=true|false`` line."""
    text = Path(path).read_text()
    closed = True
    rows = []
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "").lower() != "x,y":
        raise CurveError(f"{path}: expected header 'x,y'")
    for ln in lines[1:]:
        if ln.startswith("#"):
            key, _, val = ln[1:].strip().partition("=")
            if key.strip().lower() == "closed":
                if val.strip().lower() not in ("true", "false"):
                    raise CurveError(f"{path}: bad closed flag {val!r}")
                closed = val.strip().lower() == "true"
            continue
        parts = next(csv.reader([ln]))
        if len(parts) != 2:
            raise CurveError(f"{path}: bad row {ln!r}")
        rows.append((float(parts[0]), float(parts[1])))
    return SampledCurve(np.array(rows), closed=closed)


def write_curve_csv(c: SampledCurve, path) -> None:
    buf = io.StringIO()
    buf.write("x,y\n")
    for x, y in c.points:
        buf.write(f"{x:.17g},{y:.17g}\n")
    buf.write(f"# closed={'true' if c.closed else 'false'}\n")
    Path(path).write_text(buf.getvalue())
