"""Adaptive evaluation of the singular level-set integral.

For a field f on R^n,

    F(k) = (1/k) * integral over B(0, 2R) of (|Df| / |f|)^((k-1)/k) dx

tends to twice the (n-1)-dimensional measure of {f = 0} as k grows. The
integral is computed on an adaptive 2^n-tree over the cube [-2R, 2R]^n clipped
to the ball:

* a cell is refined while ``diam * max|Df| >= tau * min|f|`` over its probe
  points (corners plus a jittered centre), or while the zero set may pass
  through it;
* leaves within ``near_band`` diameters of the zero set (measured by
  ``|f| / |Df|``) use the linearisation ``|f| ~ |Df| |t|`` at the jittered
  centre, ``t`` being the signed distance to the tangent zero plane. The
  integral of ``|t|^(-(k-1)/k)`` over the cube has a closed form. It matches
  the integrand at the centre, so it is the midpoint rule plus an exact
  correction for the convexity in ``t``;
* such a leaf above the maximum depth is only accepted once its tangent plane
  reproduces f at the corners to ``linear_tol * min|f|``;
* other leaves use the midpoint rule at the jittered centre, with sub-samples
  when cut by the sphere ``|x| = 2R``.

The tree depends only on the field and the configuration, so one tree serves
every k of a schedule.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .fields import ScalarField, _is_distance
from .geometry import SampledCurve, reach_estimate

log = logging.getLogger(__name__)

__all__ = [
    "QuadratureConfig",
    "MeasureEstimate",
    "FixedKResult",
    "BoundReport",
    "CellSet",
    "ZeroValueError",
    "NonFiniteIntegrandError",
    "integrand",
    "build_cells",
    "integrate_fixed_k",
    "estimate_measure",
    "fit_inverse_k",
    "bound_diagnostics",
    "band_cell_integral",
]

JITTER_SCALE = 1.0 / 32.0  # max jitter per axis, in cell widths
COLLAPSE_WIDTH = 1e-7  # relative width below which a cube axis is treated as flat
# |t| below SNAP * R is rounding noise and is set to 0. At large k a sliver of
# thickness d next to the zero plane still carries d^(1/k)/k of mass, so a
# zero set lying on a cell face would otherwise be counted from both sides.
SNAP = 1e-12


class ZeroValueError(ArithmeticError):
    """The integrand was requested at a point where f vanishes."""


class NonFiniteIntegrandError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    R: float
    base_cells: int = 64
    max_depth: int = 12
    refine_factor: float = 4.0
    k_schedule: tuple[int, ...] = (8, 32, 128, 512, 2048)
    jitter_seed: int = 0
    threads: int = 1
    boundary_subsamples: int = 8
    near_band: float = 8.0
    linear_tol: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "k_schedule", tuple(int(k) for k in self.k_schedule))
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.base_cells < 1:
            raise ValueError("base_cells must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not self.refine_factor > 0:
            raise ValueError("refine_factor must be positive")
        ks = self.k_schedule
        if not ks or any(k < 2 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("k_schedule must be strictly increasing with all k >= 2")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def jitter(self, dim: int) -> np.ndarray:
        rng = np.random.default_rng(self.jitter_seed)
        return rng.uniform(-JITTER_SCALE, JITTER_SCALE, size=dim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_schedule"] = list(self.k_schedule)
        return d


# --------------------------------------------------------------------------
# integrand


def integrand(f: ScalarField, p, k: int) -> float:
    """(|Df| / |f|)^((k-1)/k) at one point, computed in log space."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pt = np.asarray(p, dtype=float)[None, :]
    v, g = f.value_and_gradient(pt)
    v = float(v[0])
    if v == 0.0:
        raise ZeroValueError(f"f vanishes at {tuple(pt[0])}")
    gn = float(f.gradient_norm(pt)[0])
    a = (k - 1) / k
    if a == 0.0:
        return 1.0
    if gn == 0.0:
        return 0.0
    return math.exp(a * (math.log(gn) - math.log(abs(v))))


# --------------------------------------------------------------------------
# closed-form cell integral of |t|^(-a)


def _iterated_antiderivative(s: np.ndarray, m: int, e: float) -> np.ndarray:
    """m-fold antiderivative of |s|^(e-1) vanishing at 0."""
    denom = math.prod(e + j for j in range(m))
    mag = np.abs(s) ** (e + m - 1) / denom
    if m % 2:
        mag = np.sign(s) * mag
    return mag


def _mean_abs_power(t0: np.ndarray, widths: np.ndarray, e: float, tol: float = 0.0) -> np.ndarray:
    """E|t0 + sum_i w_i U_i|^(e-1) for independent U_i ~ U[0, 1].

    Uses the divided difference of the iterated antiderivative over each
    width. Widths are assumed sorted in decreasing order; axes whose width is
    negligible against the largest are replaced by their midpoint.
    """
    n, dim = widths.shape
    out = np.empty(n)
    flat = widths < COLLAPSE_WIDTH * widths[:, :1]
    m_eff = dim - flat.sum(axis=1)
    shift = np.where(flat, 0.5 * widths, 0.0).sum(axis=1)
    base = t0 + shift
    for m in range(1, dim + 1):
        sel = np.flatnonzero(m_eff == m)
        if sel.size == 0:
            continue
        w = widths[sel, :m]
        acc = np.zeros(sel.size)
        for subset in itertools.product((0, 1), repeat=m):
            s = base[sel] + (w * np.array(subset)).sum(axis=1)
            if tol:
                s = np.where(np.abs(s) <= tol, 0.0, s)
            sign = -1.0 if (m - sum(subset)) % 2 else 1.0
            acc += sign * _iterated_antiderivative(s, m, e)
        out[sel] = acc / np.prod(w, axis=1)
    return out


def band_cell_integral(h: float, normal, t_center: float, k: int, center_offset=None) -> float:
    """Integral of |t|^(-(k-1)/k) over a cube of side h for affine t.

    ``t(p) = t_center + normal . (p - c)`` with unit ``normal`` and ``c`` the
    cube centre (or ``c = centre + center_offset``).
    """
    nrm = np.asarray(normal, dtype=float)
    off = np.zeros_like(nrm) if center_offset is None else np.asarray(center_offset, dtype=float)
    w = np.sort(np.abs(nrm) * h)[::-1]
    t0 = t_center - float(np.dot(nrm, off)) - 0.5 * float(w.sum())
    return float(h ** len(nrm) * _mean_abs_power(np.array([t0]), w[None, :], 1.0 / k)[0])


# --------------------------------------------------------------------------
# tree construction


@dataclass
class CellSet:
    """Leaves of the adaptive tree, ready to be integrated for any k."""

    dim: int
    smooth_weight: np.ndarray  # volume represented by each midpoint sample
    smooth_log_ratio: np.ndarray  # log(|Df| / |f|) at the sample
    band_volume: np.ndarray  # cube volume (times the in-domain fraction)
    band_t0: np.ndarray  # smallest value of t over the cube
    band_widths: np.ndarray  # h * |normal_i|, sorted decreasingly
    cells_evaluated: int
    unresolved: int
    straddling: int
    sign_changes: int
    warnings: list[str] = field(default_factory=list)
    t_tol: float = 0.0

    @property
    def leaves(self) -> int:
        return len(self.smooth_weight) + len(self.band_volume)

    def integral(self, k: int) -> float:
        """Unnormalised integral of (|Df|/|f|)^((k-1)/k); fsum keeps it order independent."""
        a = (k - 1) / k
        smooth = self.smooth_weight * np.exp(a * self.smooth_log_ratio)
        if len(self.band_volume):
            band = self.band_volume * _mean_abs_power(self.band_t0, self.band_widths, 1.0 / k, self.t_tol)
        else:
            band = np.zeros(0)
        total = np.concatenate([smooth, band])
        if not np.all(np.isfinite(total)):
            raise NonFiniteIntegrandError(f"non-finite cell contribution at k={k}")
        return math.fsum(total)

    def F(self, k: int) -> float:
        return self.integral(k) / k


def _evaluate(f: ScalarField, pts: np.ndarray, threads: int, chunk: int = 1 << 18):
    if len(pts) == 0:
        return np.zeros(0), np.zeros((0, f.dim)), np.zeros(0)
    blocks = [pts[s : s + chunk] for s in range(0, len(pts), chunk)]

    def run(b):
        v, g = f.value_and_gradient(b)
        return v, g, f.gradient_norm(b)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
    )


@dataclass
class _Leaves:
    sm_w: list = field(default_factory=list)
    sm_lr: list = field(default_factory=list)
    bd_vol: list = field(default_factory=list)
    bd_t0: list = field(default_factory=list)
    bd_w: list = field(default_factory=list)
    evaluated: int = 0
    unresolved: int = 0
    straddling: int = 0
    sign_changes: int = 0
    boundary_band: int = 0


def build_cells(f: ScalarField, cfg: QuadratureConfig, chunk: int = 1 << 16) -> CellSet:
    """Refine the tree over [-2R, 2R]^n and classify its leaves.

    Each level is processed ``chunk`` cells at a time so peak memory follows
    the number of leaves rather than the probe arrays of a whole level.
    """
    dim = f.dim
    R2 = 2.0 * cfg.R
    h = 2.0 * R2 / cfg.base_cells
    idx = np.array(list(itertools.product(range(cfg.base_cells), repeat=dim)), dtype=np.int64)
    acc = _Leaves()
    for depth in range(cfg.max_depth + 1):
        if len(idx) == 0:
            break
        children = [_level_chunk(f, cfg, idx[s : s + chunk], depth, h, acc) for s in range(0, len(idx), chunk)]
        idx = np.concatenate(children)
        h *= 0.5

    def cat(parts, shape):
        return np.concatenate(parts) if parts else np.zeros(shape)

    warnings = []
    if acc.boundary_band:
        warnings.append(f"{acc.boundary_band} band cells cross the integration boundary |x| = 2R")
    if acc.unresolved:
        warnings.append(f"{acc.unresolved} cells unresolved at max_depth={cfg.max_depth}")
    if acc.straddling == 0:
        warnings.append("empty zero set: no cell meets the zero set inside B(0, 2R)")
    return CellSet(
        dim=dim,
        smooth_weight=cat(acc.sm_w, (0,)),
        smooth_log_ratio=cat(acc.sm_lr, (0,)),
        band_volume=cat(acc.bd_vol, (0,)),
        band_t0=cat(acc.bd_t0, (0,)),
        band_widths=cat(acc.bd_w, (0, dim)),
        cells_evaluated=acc.evaluated,
        unresolved=acc.unresolved,
        straddling=acc.straddling,
        sign_changes=acc.sign_changes,
        warnings=warnings,
        t_tol=SNAP * cfg.R,
    )


def _level_chunk(f: ScalarField, cfg: QuadratureConfig, idx: np.ndarray, depth: int, h: float, acc: _Leaves) -> np.ndarray:
    """Classify one batch of cells at ``depth``; returns the child indices to refine."""
    dim = f.dim
    R2 = 2.0 * cfg.R
    jitter = cfg.jitter(dim)
    jitter_rad = math.sqrt(float(np.sum((0.5 + np.abs(jitter)) ** 2)))
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=dim)))
    child_offsets = corners.astype(np.int64)
    signed = f.signed

    lo = -R2 + idx * h
    # clip to the ball
    near = np.clip(0.0, lo, lo + h)
    keep = np.einsum("ij,ij->i", near, near) <= R2 * R2
    idx, lo = idx[keep], lo[keep]
    if len(idx) == 0:
        return np.zeros((0, dim), dtype=np.int64)
    far = np.where(np.abs(lo) > np.abs(lo + h), lo, lo + h)
    inside = np.einsum("ij,ij->i", far, far) <= R2 * R2

    centre = lo + (0.5 + jitter) * h
    # corners are shared between neighbours: evaluate each node once
    shape = (cfg.base_cells * 2**depth + 1,) * dim
    nodes = (idx[:, None, :] + child_offsets[None]).reshape(-1, dim)
    ukeys, inv = np.unique(np.ravel_multi_index(nodes.T, shape), return_inverse=True)
    unodes = np.column_stack(np.unravel_index(ukeys, shape))
    vn, _, gnn = _evaluate(f, -R2 + unodes * h, cfg.threads)
    vc, gvec, gncen = _evaluate(f, centre, cfg.threads)
    acc.evaluated += len(idx)
    inv = inv.reshape(-1, len(corners))
    v = np.column_stack([vn[inv], vc])
    gn = np.column_stack([gnn[inv], gncen])
    gc = np.sqrt(np.einsum("ij,ij->i", gvec, gvec))

    diam = h * math.sqrt(dim)
    vmin = np.abs(v).min(axis=1)
    crit = diam * gn.max(axis=1) >= cfg.refine_factor * vmin
    through = np.abs(vc) <= gc * (h * jitter_rad)
    if signed:
        change = (v > 0).any(axis=1) & (v < 0).any(axis=1) | (v == 0).any(axis=1)
    else:
        change = np.zeros(len(v), dtype=bool)
    flagged = crit | through | change

    last = depth == cfg.max_depth
    # near the zero set the planar model is used, and only once it
    # reproduces f at the corners
    lin_err = _linear_error(v[:, :-1], vc, gvec, corners, lo, centre, h, signed)
    planar = inside & (gc > 0) & (np.abs(vc) <= gc * (cfg.near_band * diam))
    if last:
        band = flagged | planar
        refine = np.zeros(len(v), dtype=bool)
        acc.sign_changes += int(np.count_nonzero(change))
    else:
        refine = flagged | (planar & (lin_err > cfg.linear_tol * vmin))
        band = planar & ~refine
    smooth = ~band & ~refine

    # smooth leaves
    s_in = smooth & inside
    s_cut = smooth & ~inside
    if np.any(s_in):
        vv = vc[s_in]
        if np.any(vv == 0):
            bad = lo[s_in][np.flatnonzero(vv == 0)[0]]
            raise NonFiniteIntegrandError(f"f vanishes at the sample of cell {tuple(bad)} (h={h})")
        with np.errstate(divide="ignore"):
            acc.sm_lr.append(np.log(gncen[s_in]) - np.log(np.abs(vv)))
        acc.sm_w.append(np.full(int(s_in.sum()), h**dim))
    if np.any(s_cut):
        w, lr = _clipped_samples(f, lo[s_cut], h, R2, jitter, cfg)
        acc.sm_w.append(w)
        acc.sm_lr.append(lr)

    # band leaves
    if np.any(band):
        bl = np.flatnonzero(band)
        degenerate = gc[bl] == 0
        if np.any(degenerate):
            acc.unresolved += int(degenerate.sum())
            dl = bl[degenerate]
            if np.any(vc[dl] == 0):
                raise NonFiniteIntegrandError(
                    f"f and Df vanish together near {tuple(lo[dl[0]])}; 0 is not a regular value"
                )
            with np.errstate(divide="ignore"):
                acc.sm_lr.append(np.log(gncen[dl]) - np.log(np.abs(vc[dl])))
            acc.sm_w.append(np.full(len(dl), h**dim))
            bl = bl[~degenerate]
        gnb = gc[bl]
        normal = gvec[bl] / gnb[:, None]
        t_c = vc[bl] / gnb
        t_lo = t_c - np.einsum("ij,ij->i", normal, (0.5 + jitter)[None, :] * h)
        t0 = t_lo + np.minimum(normal, 0.0).sum(axis=1) * h
        widths = -np.sort(-np.abs(normal) * h, axis=1)
        frac = np.ones(len(bl))
        cut = ~inside[bl]
        if np.any(cut):
            frac[cut] = _inside_fraction(lo[bl[cut]], h, R2, cfg.boundary_subsamples)
            acc.boundary_band += int(cut.sum())
        if last:
            rough = flagged[bl] & (lin_err[bl] > 0.25 * gnb * h)
            acc.unresolved += int(np.count_nonzero(rough))
        acc.straddling += int(np.count_nonzero(np.abs(t_c) <= h * jitter_rad))
        acc.bd_vol.append(frac * h**dim)
        acc.bd_t0.append(t0)
        acc.bd_w.append(widths)

    ridx = idx[refine]
    return (2 * ridx[:, None, :] + child_offsets[None]).reshape(-1, dim)


def _linear_error(vcorner, vc, gvec, corners, lo, centre, h, signed):
    """Max deviation of f at the corners from its tangent plane at the centre."""
    pts = lo[:, None, :] + corners[None] * h
    lin = vc[:, None] + np.einsum("ckd,cd->ck", pts - centre[:, None, :], gvec)
    if not signed:
        lin = np.abs(lin)
    return np.abs(vcorner - lin).max(axis=1)


def _subsample_offsets(dim: int, s: int, jitter: np.ndarray) -> np.ndarray:
    pts = np.array(list(itertools.product(range(s), repeat=dim)), dtype=float)
    return (pts + 0.5 + jitter[None, :]) / s


def _inside_fraction(lo: np.ndarray, h: float, R2: float, s: int) -> np.ndarray:
    off = np.array(list(itertools.product(range(s), repeat=lo.shape[1])), dtype=float)
    pts = lo[:, None, :] + (off[None] + 0.5) / s * h
    return (np.einsum("ijk,ijk->ij", pts, pts) <= R2 * R2).mean(axis=1)


def _clipped_samples(f, lo, h, R2, jitter, cfg):
    """Sub-midpoint samples of cells cut by the sphere |x| = 2R."""
    s = cfg.boundary_subsamples
    dim = lo.shape[1]
    off = _subsample_offsets(dim, s, jitter)
    pts = (lo[:, None, :] + off[None] * h).reshape(-1, dim)
    pts = pts[np.einsum("ij,ij->i", pts, pts) <= R2 * R2]
    v, _, gn = _evaluate(f, pts, cfg.threads)
    if np.any(v == 0):
        raise NonFiniteIntegrandError(f"f vanishes at boundary sample {tuple(pts[np.flatnonzero(v == 0)[0]])}")
    with np.errstate(divide="ignore"):
        lr = np.log(gn) - np.log(np.abs(v))
    return np.full(len(pts), (h / s) ** dim), lr


# --------------------------------------------------------------------------
# public integration API


@dataclass(frozen=True)
class FixedKResult:
    k: int
    F: float
    cells: int
    unresolved: int = 0


def integrate_fixed_k(f: ScalarField, cfg: QuadratureConfig, k: int, cells: CellSet | None = None) -> FixedKResult:
    """F(k) for one k. Pass ``cells`` to reuse a tree built by :func:`build_cells`."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cs = build_cells(f, cfg) if cells is None else cells
    return FixedKResult(k=k, F=cs.F(k), cells=cs.cells_evaluated, unresolved=cs.unresolved)


def fit_inverse_k(ks: Sequence[float], Fs: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit F = F_inf + c / k; returns (F_inf, c, max deviation)."""
    k = np.asarray(ks, dtype=float)
    F = np.asarray(Fs, dtype=float)
    A = np.column_stack([np.ones_like(k), 1.0 / k])
    coef, *_ = np.linalg.lstsq(A, F, rcond=None)
    resid = float(np.max(np.abs(A @ coef - F)))
    return float(coef[0]), float(coef[1]), resid


@dataclass
class BoundReport:
    L: float
    epsilon: float
    samples: int
    sandwich_violations: int
    gradient_violations: int
    value_violations: int
    jacobian_band: tuple[float, float]
    lipschitz_ratio: float  # L * eps / min |D_z f|
    reach: float
    warnings: list[str] = field(default_factory=list)


@dataclass
class MeasureEstimate:
    per_k: list[FixedKResult]
    limit: float
    h_measure: float
    extrapolation_residual: float
    slope: float
    monotone: bool
    warnings: list[str] = field(default_factory=list)
    config: QuadratureConfig | None = None
    diagnostics: BoundReport | None = None
    model: str = "F(k) = F_inf + c/k (heuristic rate)"

    def to_json(self) -> dict:
        return {
            "config": self.config.to_dict() if self.config else {},
            "per_k": [{"k": r.k, "F": r.F, "cells": r.cells} for r in self.per_k],
            "limit": self.limit,
            "h_measure": self.h_measure,
            "residual": self.extrapolation_residual,
            "warnings": list(self.warnings),
        }


def estimate_measure(f: ScalarField, cfg: QuadratureConfig, cells: CellSet | None = None) -> MeasureEstimate:
    """Sweep the k schedule, extrapolate to k = infinity, halve the limit."""
    cs = build_cells(f, cfg) if cells is None else cells
    per_k = [FixedKResult(k=k, F=cs.F(k), cells=cs.cells_evaluated, unresolved=cs.unresolved) for k in cfg.k_schedule]
    warnings = list(cs.warnings)
    ks = [r.k for r in per_k]
    Fs = [r.F for r in per_k]
    if len(per_k) >= 3:
        limit, slope, resid = fit_inverse_k(ks[-3:], Fs[-3:])
    else:
        limit, slope = Fs[-1], 0.0
        resid = abs(Fs[-1] - Fs[-2]) if len(Fs) == 2 else 0.0
        warnings.append("fewer than 3 k values: limit is F at the largest k")
    diffs = np.diff(Fs[-3:])
    monotone = bool(np.all(diffs <= 0) or np.all(diffs >= 0))
    if not monotone:
        warnings.append("F(k) is not monotone over the last k values")
    if limit < 0:
        warnings.append(f"extrapolated limit {limit:.3g} < 0 clamped to 0")
        limit = 0.0
    return MeasureEstimate(
        per_k=per_k,
        limit=limit,
        h_measure=limit / 2.0,
        extrapolation_residual=resid,
        slope=slope,
        monotone=monotone,
        warnings=warnings,
        config=cfg,
    )


# --------------------------------------------------------------------------
# sandwich diagnostics


def _project_to_zero(f: ScalarField, z: np.ndarray, steps: int = 8) -> np.ndarray:
    for _ in range(steps):
        v, g = f.value_and_gradient(z)
        g2 = np.einsum("ij,ij->i", g, g)
        z = z - (v / np.where(g2 > 0, g2, 1.0))[:, None] * g
    return z


def bound_diagnostics(
    f: ScalarField,
    curve: SampledCurve,
    L: float,
    epsilon: float,
    samples: int = 10_000,
    seed: int = 0,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> BoundReport:
    """Check the gradient and value sandwiches in an epsilon-band of the zero set.

    Points ``y = z + t n(z)`` are drawn with ``z`` on ``curve`` (pulled onto the
    zero set by Newton steps), ``n`` the unit gradient direction and
    ``|t| <= epsilon``. With a valid Lipschitz constant ``L`` of Df,

        |D_z f| - L eps <= |D_y f| <= |D_z f| + L eps
        (|D_z f| - L eps)|t| <= |f(y)| <= (|D_z f| + L eps)|t|.
    """
    if _is_distance(f):
        raise ValueError("bound diagnostics need an analytic field")
    if not L > 0:
        raise ValueError("L must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    re = reach_estimate(curve)
    if epsilon >= re.reach:
        raise ValueError(f"epsilon={epsilon} >= estimated reach {re.reach:.4g}: normals may cross")
    rng = np.random.default_rng(seed)
    a, b = curve.segments()
    seg_len = np.hypot(*(b - a).T)
    seg = rng.choice(len(a), size=samples, p=seg_len / seg_len.sum())
    s = rng.random(samples)
    z = a[seg] + s[:, None] * (b[seg] - a[seg])
    z = _project_to_zero(f, z)
    _, gz = f.value_and_gradient(z)
    Gz = np.linalg.norm(gz, axis=1)
    n = gz / Gz[:, None]
    t = rng.uniform(-epsilon, epsilon, size=samples)
    y = z + t[:, None] * n
    fy, gy = f.value_and_gradient(y)
    Gy = np.linalg.norm(gy, axis=1)
    Le = L * epsilon
    slack_g = rtol * Gz + atol
    g_bad = (Gy < Gz - Le - slack_g) | (Gy > Gz + Le + slack_g)
    slack_f = rtol * Gz * np.abs(t) + atol
    at = np.abs(t)
    f_bad = (np.abs(fy) < (Gz - Le) * at - slack_f) | (np.abs(fy) > (Gz + Le) * at + slack_f)
    kappa = re.kappa_hat
    band = ((1 - epsilon * kappa) ** (f.dim - 1), (1 + epsilon * kappa) ** (f.dim - 1))
    ratio = Le / float(Gz.min())
    warnings = []
    if ratio > 0.1:
        warnings.append(f"L*eps / min|D_z f| = {ratio:.3g} > 0.1: sandwich is loose")
    return BoundReport(
        L=L,
        epsilon=epsilon,
        samples=samples,
        sandwich_violations=int(np.count_nonzero(g_bad | f_bad)),
        gradient_violations=int(np.count_nonzero(g_bad)),
        value_violations=int(np.count_nonzero(f_bad)),
        jacobian_band=band,
        lipschitz_ratio=ratio,
        reach=re.reach,
        warnings=warnings,
    )
