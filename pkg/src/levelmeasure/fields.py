"""Scalar fields consumed by the estimator.

Three variants share one interface: analytic expressions, unsigned distance
to sampled curves, and a level shift ``f - c`` of any other field. All methods
accept batches of points with shape ``(N, dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .expr import Expression, parse
from .geometry import SampledCurve, SegmentIndex

__all__ = [
    "ScalarField",
    "AnalyticField",
    "DistanceField",
    "ShiftedField",
    "RegularityReport",
    "evaluate",
    "gradient_norm",
    "regularity_check",
]


class ScalarField:
    """Base class. Subclasses implement :meth:`value_and_gradient`."""

    dim: int
    #: False for fields that never change sign (unsigned distance).
    signed: bool = True

    def value_and_gradient(self, points) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def evaluate(self, points) -> np.ndarray:
        return self.value_and_gradient(points)[0]

    def gradient_norm(self, points) -> np.ndarray:
        _, g = self.value_and_gradient(points)
        return np.sqrt(np.einsum("ij,ij->i", g, g))

    def _points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[-1] != self.dim:
            raise ValueError(f"points must have {self.dim} coordinates")
        return pts


class AnalyticField(ScalarField):
    def __init__(self, expression: Expression | str, dim: int | None = None):
        if isinstance(expression, str):
            if dim is None:
                raise ValueError("dim is required when parsing a string")
            expression = parse(expression, dim)
        self.expression = expression
        self.dim = expression.dim

    def value_and_gradient(self, points):
        return self.expression.evaluate(self._points(points))

    def __repr__(self):
        return f"AnalyticField({self.expression})"


class DistanceField(ScalarField):
    """Unsigned Euclidean distance to the union of one or more curves.

    The gradient is the unit vector from the foot point; on the curve itself
    the segment normal is used. Its norm is reported as 1 everywhere,
    including the medial axis, since only almost-everywhere values matter to
    the integral.
    """

    signed = False
    dim = 2

    def __init__(self, curves: SampledCurve | Iterable[SampledCurve]):
        if isinstance(curves, SampledCurve):
            curves = [curves]
        self.curves = list(curves)
        self.index = SegmentIndex(self.curves)
        pts = np.concatenate([c.points for c in self.curves])
        span = pts.max(axis=0) - pts.min(axis=0)
        self.zero_tol = 1e-12 * float(np.hypot(*span))

    def query(self, points):
        """Distance (snapped to 0 within tolerance), foot points, segment ids."""
        d, foot, seg = self.index.query(self._points(points))
        d = np.where(d <= self.zero_tol, 0.0, d)
        return d, foot, seg

    def value_and_gradient(self, points):
        pts = self._points(points)
        d, foot, seg = self.query(pts)
        grad = np.empty_like(pts)
        on = d == 0
        off = ~on
        grad[off] = (pts[off] - foot[off]) / d[off, None]
        if np.any(on):
            ab = self.index.ab[seg[on]]
            n = np.column_stack([-ab[:, 1], ab[:, 0]])
            grad[on] = n / np.hypot(*n.T)[:, None]
        return d, grad

    def evaluate(self, points):
        return self.query(points)[0]

    def gradient_norm(self, points):
        return np.ones(len(self._points(points)))

    def __repr__(self):
        return f"DistanceField({len(self.curves)} curve(s), {self.index.n_segments} segments)"


class ShiftedField(ScalarField):
    """``inner - c``: its zero set is the c-level set of ``inner``."""

    signed = True

    def __init__(self, inner: ScalarField, c: float):
        self.inner = inner
        self.c = float(c)
        self.dim = inner.dim

    def value_and_gradient(self, points):
        v, g = self.inner.value_and_gradient(points)
        return v - self.c, g

    def evaluate(self, points):
        return self.inner.evaluate(points) - self.c

    def gradient_norm(self, points):
        return self.inner.gradient_norm(points)

    def __repr__(self):
        return f"ShiftedField({self.inner!r}, {self.c!r})"


def _is_distance(f: ScalarField) -> bool:
    while isinstance(f, ShiftedField):
        f = f.inner
    return isinstance(f, DistanceField)


def evaluate(f: ScalarField, p) -> float:
    """Field value at a single point."""
    return float(f.evaluate(np.asarray(p, dtype=float)[None, :])[0])


def gradient_norm(f: ScalarField, p) -> float:
    return float(f.gradient_norm(np.asarray(p, dtype=float)[None, :])[0])


@dataclass(frozen=True)
class RegularityReport:
    min_grad: float
    max_grad: float
    ok: bool


def regularity_check(
    f: ScalarField,
    zero_samples: Sequence,
    probe_radius: float,
    probes_per_sample: int = 8,
    seed: int = 0,
    zero_tol: float = 1e-3,
    margin: float = 1e-6,
) -> RegularityReport:
    """Bound the gradient norm on and around sampled zeros of ``f``.

    Each sample is checked together with ``probes_per_sample`` random points
    drawn uniformly from the ball of radius ``probe_radius`` around it.
    """
    pts = np.asarray(zero_samples, dtype=float)
    if pts.size == 0:
        raise ValueError("zero_samples must be nonempty")
    pts = pts.reshape(-1, f.dim)
    if _is_distance(f):
        return RegularityReport(1.0, 1.0, True)
    vals = f.evaluate(pts)
    if np.any(np.abs(vals) > zero_tol):
        i = int(np.argmax(np.abs(vals)))
        raise ValueError(f"sample {i} is not a zero of the field (|f| = {abs(vals[i]):.3g})")
    rng = np.random.default_rng(seed)
    m = probes_per_sample
    direction = rng.standard_normal((len(pts), m, f.dim))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    radius = probe_radius * rng.random((len(pts), m, 1)) ** (1.0 / f.dim)
    probes = (pts[:, None, :] + radius * direction).reshape(-1, f.dim)
    g = np.concatenate([f.gradient_norm(pts), f.gradient_norm(probes)])
    lo, hi = float(g.min()), float(g.max())
    return RegularityReport(lo, hi, lo > margin)
