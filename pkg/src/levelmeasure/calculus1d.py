"""One-variable checks around the ratio A_f = |f'/f|.

If ``|f'| <= lambda |f|`` on an interval then ``log f`` is lambda-Lipschitz
and f stays inside exponential fences. Conversely A_f blows up at simple
roots, which makes it a root detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import Expression, parse

__all__ = [
    "Samples1D",
    "LambdaCheck",
    "FenceCheck",
    "Detection",
    "PreconditionError",
    "sample",
    "ratio",
    "lambda_bound_check",
    "fence_check",
    "root_detector",
]


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Samples1D:
    xs: np.ndarray
    fs: np.ndarray
    dfs: np.ndarray

    def __post_init__(self):
        if not (len(self.xs) == len(self.fs) == len(self.dfs)):
            raise ValueError("xs, fs and dfs must have equal lengths")
        if np.any(np.diff(self.xs) <= 0):
            raise ValueError("xs must be strictly increasing")


def _expr(e: Expression | str) -> Expression:
    e = parse(e, 1) if isinstance(e, str) else e
    if e.dim != 1:
        raise ValueError("expected an expression in one variable")
    return e


def sample(e: Expression | str, a: float, b: float, n: int) -> Samples1D:
    if n < 2:
        raise ValueError("n must be >= 2")
    if not a < b:
        raise ValueError("need a < b")
    xs = np.linspace(a, b, n)
    fs, g = _expr(e).evaluate(xs[:, None])
    return Samples1D(xs, fs, g[:, 0])


def ratio(s: Samples1D) -> np.ndarray:
    """A_f at each node: inf where f = 0 != f', nan where both vanish."""
    fs, dfs = np.abs(s.fs), np.abs(s.dfs)
    out = np.full(len(fs), np.nan)
    nz = fs > 0
    out[nz] = dfs[nz] / fs[nz]
    out[~nz & (dfs > 0)] = np.inf
    return out


@dataclass(frozen=True)
class LambdaCheck:
    holds: bool
    worst_x: float
    worst_ratio: float


def lambda_bound_check(e: Expression | str, a: float, b: float, lam: float, n: int = 1024) -> LambdaCheck:
    """Check |f'| <= lambda |f| on an n-point grid."""
    s = sample(e, a, b, n)
    holds = bool(np.all(np.abs(s.dfs) <= lam * np.abs(s.fs)))
    r = ratio(s)
    if np.all(np.isnan(r)):
        return LambdaCheck(holds, float(s.xs[0]), 0.0)
    i = int(np.nanargmax(r))
    return LambdaCheck(holds, float(s.xs[i]), float(r[i]))


@dataclass(frozen=True)
class FenceCheck:
    lower: float
    ratio: float
    upper: float
    holds: bool


def fence_check(e: Expression | str, x0: float, x1: float, lam: float, n: int = 1024) -> FenceCheck:
    """exp(-lambda d) <= f(x1)/f(x0) <= exp(lambda d) with d = x1 - x0.

    Refuses unless f > 0 and the lambda bound hold on an n-point grid.
    """
    if not x0 < x1:
        raise ValueError("need x0 < x1")
    s = sample(e, x0, x1, n)
    if np.any(s.fs <= 0):
        i = int(np.argmin(s.fs))
        raise PreconditionError(f"f is not strictly positive on [{x0}, {x1}] (f({s.xs[i]:.6g}) = {s.fs[i]:.6g})")
    lc = lambda_bound_check(e, x0, x1, lam, n)
    if not lc.holds:
        raise PreconditionError(
            f"|f'| <= {lam}|f| fails at x = {lc.worst_x:.6g} (ratio {lc.worst_ratio:.6g})"
        )
    q = float(s.fs[-1] / s.fs[0])
    d = x1 - x0
    lower, upper = math.exp(-lam * d), math.exp(lam * d)
    return FenceCheck(lower, q, upper, lower <= q <= upper)


@dataclass(frozen=True)
class Detection:
    lo: float
    hi: float
    kind: str  # "sign_change" or "minimum"
    peak: float = field(default=math.inf)

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)


def root_detector(e: Expression | str, a: float, b: float, threshold: float, n: int = 10_001) -> list[Detection]:
    """Intervals of grid nodes where A_f exceeds ``threshold``.

    Consecutive flagged nodes are merged; nodes where f and f' both vanish are
    indeterminate and break no run but flag nothing themselves. Each interval
    is tagged by whether f changes sign across it; otherwise it surrounds a
    minimum of |f| (a double root or a near miss). Interval ends are placed
    halfway between the outermost flagged node and its unflagged neighbour,
    where the threshold crossing is expected.
    """
    if n < 16:
        raise ValueError("n must be >= 16")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    s = sample(e, a, b, n)
    r = ratio(s)
    hot = np.where(np.isnan(r), False, r > threshold)
    indeterminate = np.isnan(r)
    # an indeterminate node between flagged nodes joins their run
    before = np.r_[False, hot[:-1]]
    after = np.r_[hot[1:], False]
    joined = hot | (indeterminate & before & after)
    out = []
    i = 0
    while i < n:
        if not joined[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and joined[j + 1]:
            j += 1
        lo_i, hi_i = max(i - 1, 0), min(j + 1, n - 1)
        seg = s.fs[lo_i : hi_i + 1]
        change = bool(np.any(seg > 0) and np.any(seg < 0))
        peak = float(np.nanmax(r[i : j + 1]))
        lo = 0.5 * (s.xs[i - 1] + s.xs[i]) if i > 0 else s.xs[0]
        hi = 0.5 * (s.xs[j] + s.xs[j + 1]) if j + 1 < n else s.xs[-1]
        out.append(Detection(float(lo), float(hi), "sign_change" if change else "minimum", peak))
        i = j + 1
    return out
