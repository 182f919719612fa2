"""A rectifiable boundary on which the level-set estimator fails.

Circles ``C_j = boundary of B(q_j, r_j)`` are placed greedily at the rational
points of the unit square ``S = (0, 1)^2``. Radii come from the super-geometric
schedule ``r_m = 2^(-(m^2+m)/2)``, and each new centre keeps the clearance

    3 r_j < dist(q_j, C_1 u ... u C_{j-1} u boundary(S)).

The total length stays finite while the union becomes dense in S. At any
finite truncation this is visible as a Cauchy sequence of lengths alongside a
growing coverage fraction.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import count, islice
from typing import Iterator

import numpy as np

from .geometry import SampledCurve, circle_curve

__all__ = [
    "M_MAX",
    "RadiusSchedule",
    "Circle",
    "CircleSet",
    "ScheduleExhausted",
    "radius",
    "radius_exact",
    "tail_ratio",
    "calkin_wilf",
    "unit_interval_rationals",
    "rational_points",
    "build_circle_set",
    "validate_circle_set",
    "coverage_fraction",
    "disc_square_area",
    "annulus_square_area",
    "coverage_curve",
    "total_boundary_length",
    "radius_sum_exact",
    "circles_to_curves",
]

# (m^2 + m)/2 <= 1074 keeps 2^-exponent representable (subnormals included)
M_MAX = 45
ON_CIRCLE_TOL = 1e-12


class ScheduleExhausted(UserWarning):
    pass


def _exponent(m: int) -> int:
    if m < 1:
        raise ValueError("m must be >= 1")
    e = (m * m + m) // 2
    if e > 1074:
        raise OverflowError(f"r_{m} = 2^-{e} underflows a double; use m <= {M_MAX}")
    return e


def radius(m: int) -> float:
    """r_m = 2^(-(m^2+m)/2) as an exact power of two."""
    return math.ldexp(1.0, -_exponent(m))


def radius_exact(m: int) -> Fraction:
    return Fraction(1, 2 ** _exponent(m))


def tail_ratio(m: int, m_max: int) -> Fraction:
    """sum_{i=m+1}^{m_max} r_i^2 / r_m^2, exactly."""
    if not 1 <= m < m_max:
        raise ValueError("need 1 <= m < m_max")
    rm = radius_exact(m)
    return sum((radius_exact(i) ** 2 for i in range(m + 1, m_max + 1)), Fraction(0)) / rm**2


@dataclass(frozen=True)
class RadiusSchedule:
    m_max: int = 20

    def __post_init__(self):
        _exponent(self.m_max)

    @property
    def radii(self) -> list[float]:
        return [radius(m) for m in range(1, self.m_max + 1)]

    @property
    def eps(self) -> list[Fraction]:
        return [Fraction(1, 2**m) for m in range(1, self.m_max + 1)]

    def tail_ratios(self) -> list[Fraction]:
        return [tail_ratio(m, self.m_max) for m in range(1, self.m_max)]

    def check(self) -> bool:
        r = self.radii
        decreasing = all(b < a for a, b in zip(r, r[1:]))
        return decreasing and all(t < e for t, e in zip(self.tail_ratios(), self.eps))

    def table(self) -> list[dict]:
        rows = []
        for m in range(1, self.m_max + 1):
            row = {"m": m, "r": radius(m), "eps": 2.0**-m}
            row["tail_ratio"] = float(tail_ratio(m, self.m_max)) if m < self.m_max else 0.0
            rows.append(row)
        return rows


# --------------------------------------------------------------------------
# enumeration of rationals


def calkin_wilf() -> Iterator[Fraction]:
    """1, 1/2, 2, 1/3, 3/2, 2/3, 3, ... (every positive rational once)."""
    q = Fraction(1)
    while True:
        yield q
        q = 1 / (2 * math.floor(q) - q + 1)


def unit_interval_rationals() -> Iterator[Fraction]:
    return (q for q in calkin_wilf() if q < 1)


def rational_points() -> Iterator[tuple[Fraction, Fraction]]:
    """Rational points of S, paired along anti-diagonals (Cantor order)."""
    seq: list[Fraction] = []
    it = unit_interval_rationals()
    for s in count():
        while len(seq) <= s:
            seq.append(next(it))
        for i in range(s + 1):
            yield seq[i], seq[s - i]


# --------------------------------------------------------------------------
# circle sets


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float
    m: int
    inside_parent: bool = False

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)


@dataclass
class CircleSet:
    circles: list[Circle]
    warnings: list[str] = field(default_factory=list)
    seed: int = 0

    @property
    def N(self) -> int:
        return len(self.circles)

    @property
    def total_length(self) -> float:
        return total_boundary_length(self)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.array([[x.cx, x.cy] for x in self.circles]).reshape(-1, 2)
        r = np.array([x.r for x in self.circles])
        return c, r

    def to_json(self) -> dict:
        return {
            "circles": [
                {"cx": c.cx, "cy": c.cy, "r": c.r, "m": c.m, "inside_parent": c.inside_parent}
                for c in self.circles
            ],
            "total_length": self.total_length,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CircleSet":
        circles = []
        for c in data["circles"]:
            r = float(c["r"])
            m = c.get("m")
            if m is None:
                # recover the schedule index from an exact power of two
                mant, exp = math.frexp(r)
                m = next((k for k in range(1, M_MAX + 1) if radius(k) == r), 0) if mant == 0.5 else 0
            circles.append(Circle(float(c["cx"]), float(c["cy"]), r, int(m), bool(c.get("inside_parent", False))))
        return cls(circles)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _dist_to_circles(p: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> float:
    if len(radii) == 0:
        return math.inf
    return float(np.min(np.abs(np.hypot(*(centers - p).T) - radii)))


def _dist_to_square(p) -> float:
    x, y = p
    return min(x, 1.0 - x, y, 1.0 - y)


def build_circle_set(
    N: int, enumeration_seed: int = 0, m_max: int = M_MAX, max_candidates: int = 1_000_000
) -> CircleSet:
    """Greedy placement of N circles at rational points of the unit square.

    Each candidate point takes the largest schedule radius, below the previous
    one, that meets the 3r clearance. Candidates that admit no radius are
    skipped. A candidate lying on an earlier circle is first pushed off it by
    the smallest power of two >= 4 * ON_CIRCLE_TOL in a seeded direction.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    _exponent(m_max)
    rng = np.random.default_rng(enumeration_seed)
    shift = math.ldexp(1.0, math.ceil(math.log2(4 * ON_CIRCLE_TOL)))
    radii_table = [radius(m) for m in range(1, m_max + 1)]
    circles: list[Circle] = []
    centers = np.zeros((0, 2))
    rs = np.zeros(0)
    next_m = 1
    notes: list[str] = []
    for qx, qy in islice(rational_points(), max_candidates):
        if len(circles) == N:
            break
        if next_m > m_max:
            msg = f"radius schedule exhausted after {len(circles)} circles (m_max={m_max})"
            notes.append(msg)
            warnings.warn(msg, ScheduleExhausted, stacklevel=2)
            break
        p = np.array([float(qx), float(qy)])
        if _dist_to_circles(p, centers, rs) <= ON_CIRCLE_TOL:
            theta = rng.uniform(0.0, 2.0 * math.pi)
            p = p + shift * np.array([math.cos(theta), math.sin(theta)])
        d = min(_dist_to_circles(p, centers, rs), _dist_to_square(p))
        m = next((k for k in range(next_m, m_max + 1) if 3.0 * radii_table[k - 1] < d), None)
        if m is None:
            continue
        # disc membership parity: the region alternates union / difference
        inside = len(rs) > 0 and int(np.count_nonzero(np.hypot(*(centers - p).T) < rs)) % 2 == 1
        circles.append(Circle(float(p[0]), float(p[1]), radii_table[m - 1], m, bool(inside)))
        centers = np.vstack([centers, p])
        rs = np.append(rs, radii_table[m - 1])
        next_m = m + 1
    if len(circles) < N and not notes:
        msg = f"only {len(circles)} circles placed within {max_candidates} candidate points"
        notes.append(msg)
        warnings.warn(msg, ScheduleExhausted, stacklevel=2)
    return CircleSet(circles, notes, enumeration_seed)


def validate_circle_set(cs: CircleSet) -> list[str]:
    """Replay the construction invariants; returns a list of violations."""
    problems = []
    prev_r = math.inf
    for j, c in enumerate(cs.circles):
        p = np.array(c.center)
        if not (0 < c.cx < 1 and 0 < c.cy < 1):
            problems.append(f"circle {j}: centre outside S")
        if c.m and radius(c.m) != c.r:
            problems.append(f"circle {j}: radius is not r_{c.m}")
        if not c.r < prev_r:
            problems.append(f"circle {j}: radius not strictly decreasing")
        prev_r = c.r
        earlier = cs.circles[:j]
        cen = np.array([e.center for e in earlier]).reshape(-1, 2)
        rad = np.array([e.r for e in earlier])
        d = min(_dist_to_circles(p, cen, rad), _dist_to_square(p))
        if not 3 * c.r < d:
            problems.append(f"circle {j}: 3r clearance violated ({3 * c.r:.3g} >= {d:.3g})")
        if c.r >= _dist_to_square(p):
            problems.append(f"circle {j}: leaves S")
        for i, e in enumerate(earlier):
            gap = abs(math.hypot(c.cx - e.cx, c.cy - e.cy) - e.r) - c.r
            if gap < 2 * c.r * (1 - 1e-12):
                problems.append(f"circles {i},{j}: gap {gap:.3g} < 2r")
    return problems


def total_boundary_length(cs: CircleSet) -> float:
    return 2.0 * math.pi * math.fsum(c.r for c in cs.circles)


def radius_sum_exact(cs: CircleSet) -> Fraction:
    """Sum of the radii as an exact rational; the length is 2*pi times this.

    Increments past the first few circles fall far below double resolution of
    the running total, so the Cauchy property is checked on this value.
    """
    return sum((Fraction(c.r) for c in cs.circles), Fraction(0))


def coverage_fraction(cs: CircleSet, delta: float, h: float, threads: int = 1) -> float:
    """Fraction of h-grid midpoints of S within delta of the circle union."""
    if not delta > 0 or not h > 0:
        raise ValueError("delta and h must be positive")
    n = max(1, int(round(1.0 / h)))
    xs = (np.arange(n) + 0.5) / n
    centers, rs = cs.arrays()
    if len(rs) == 0:
        return 0.0

    def row_block(rows):
        yy = xs[rows][:, None]
        hit = np.zeros((len(rows), n), dtype=bool)
        for (cx, cy), r in zip(centers, rs):
            hit |= np.abs(np.hypot(xs[None, :] - cx, yy - cy) - r) <= delta
        return int(np.count_nonzero(hit))

    blocks = [np.arange(s, min(s + 256, n)) for s in range(0, n, 256)]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as ex:
            total = sum(ex.map(row_block, blocks))
    else:
        total = sum(map(row_block, blocks))
    return total / (n * n)


def coverage_curve(cs: CircleSet, delta: float, h: float) -> list[float]:
    """coverage_fraction of every prefix C_1..C_j, j = 1..N, in one pass."""
    if not delta > 0 or not h > 0:
        raise ValueError("delta and h must be positive")
    n = max(1, int(round(1.0 / h)))
    xs = (np.arange(n) + 0.5) / n
    hit = np.zeros((n, n), dtype=bool)
    out = []
    for c in cs.circles:
        # only rows within reach of the annulus can change
        rows = np.flatnonzero(np.abs(xs - c.cy) <= c.r + delta)
        if rows.size:
            band = np.abs(np.hypot(xs[None, :] - c.cx, xs[rows, None] - c.cy) - c.r) <= delta
            hit[rows] |= band
        out.append(int(np.count_nonzero(hit)) / (n * n))
    return out


def annulus_square_area(cx: float, cy: float, r: float, delta: float) -> float:
    """Area of {p in S : | |p - c| - r | <= delta} when the discs miss the corners."""
    outer = disc_square_area(cx, cy, r + delta)
    inner = disc_square_area(cx, cy, r - delta) if r > delta else 0.0
    return outer - inner


def disc_square_area(cx: float, cy: float, rho: float) -> float:
    """Area of the disc B((cx, cy), rho) inside the unit square.

    Closed form when the disc covers no corner of the square: the disc area
    minus the circular segments cut off by each side.
    """
    dists = (cx, 1 - cx, cy, 1 - cy)
    corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
    if any(math.hypot(cx - a, cy - b) < rho for a, b in corners):
        raise ValueError("closed form needs the disc to miss the square's corners")
    area = math.pi * rho * rho
    for d in dists:
        if d < rho:
            area -= rho * rho * math.acos(d / rho) - d * math.sqrt(rho * rho - d * d)
    return area


def circles_to_curves(cs: CircleSet, points: int = 512, min_radius: float = 1e-9) -> tuple[list[SampledCurve], list[str]]:
    """Polygonal versions of the circles; ones too small for a polygon are skipped."""
    curves, notes = [], []
    for j, c in enumerate(cs.circles):
        if c.r < min_radius * max(1.0, abs(c.cx), abs(c.cy)):
            notes.append(f"circle {j} (r={c.r:.3g}) below polygon resolution: skipped")
            continue
        curves.append(circle_curve(points, c.r, c.center))
    return curves, notes
