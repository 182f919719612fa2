import math

import jsonschema
import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelmeasure import (
    AnalyticField,
    DistanceField,
    QuadratureConfig,
    estimate_measure,
    integrate_fixed_k,
)
from levelmeasure.cli import ESTIMATE_SCHEMA
from levelmeasure.estimator import (
    ZeroValueError,
    band_cell_integral,
    bound_diagnostics,
    build_cells,
    fit_inverse_k,
    integrand,
)
from levelmeasure.geometry import circle_curve, polyline_length, zero_set_trace

# F(k) for x^2 + y^2 - 1 with R = 1, from paraboloid_oracle() below (mpmath, 30 digits)
PARABOLOID_EXACT = {
    8: 12.7449410243808,
    32: 12.6197081089415,
    128: 12.5802922694888,
    512: 12.5698884611397,
    1000: 12.5681748838443,
    2048: 12.567252427168,
}


def paraboloid_oracle(k):
    """F(k) in polar form, with the r = 1 singularity subtracted and integrated exactly.

    The integrand is (2r/|r^2-1|)^a = phi(r)/(2 pi r) * |r-1|^(-a) with
    phi(r) = (2r/(r+1))^a * 2 pi r, over 0 <= r <= 2.
    """
    mpmath.mp.dps = 30
    a = mpmath.mpf(k - 1) / k
    phi = lambda r: (2 * r / (r + 1)) ** a * 2 * mpmath.pi * r
    p1 = phi(mpmath.mpf(1))
    smooth = mpmath.quad(lambda r: (phi(r) - p1) * abs(r - 1) ** (-a), [0, 1, 2])
    singular = p1 * 2 * k  # int_0^2 |r-1|^(-a) dr = 2k
    return float((smooth + singular) / k)


@pytest.mark.parametrize("k", [8, 128, 1000])
def test_oracle_values_are_frozen(k):
    assert paraboloid_oracle(k) == pytest.approx(PARABOLOID_EXACT[k], rel=1e-12)


# integrand


def test_integrand_examples():
    f = AnalyticField("x^2+y^2-1", 2)
    assert integrand(f, (0.3, 0.2), 1) == 1.0
    assert integrand(f, (2.0, 0.0), 10**9) == pytest.approx(4 / 3, rel=1e-8)
    d = DistanceField(circle_curve(4096))
    phi = math.pi / 4096  # normal through the midpoint of the first chord
    rad = math.cos(phi) - 0.1
    p = (rad * math.cos(phi), rad * math.sin(phi))
    assert integrand(d, p, 2) == pytest.approx(math.sqrt(10), rel=1e-6)
    with pytest.raises(ZeroValueError):
        integrand(f, (1.0, 0.0), 5)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 1000))
def test_integrand_monotone_in_k(x, y, k):
    f = AnalyticField("x^2+y^2-1", 2)
    v = x * x + y * y - 1
    if abs(v) < 1e-9 or math.hypot(x, y) < 1e-100:  # keep rho^a clear of underflow
        return
    rho = 2 * math.hypot(x, y) / abs(v)
    a, b = integrand(f, (x, y), k), integrand(f, (x, y), k + 1)
    if rho > 1:
        assert rho >= b >= a * (1 - 1e-12)
    else:
        assert rho <= b <= a * (1 + 1e-12)


# closed-form cell integral


def _strip_oracle(h, theta, t_center, k):
    """Integral of |t|^(-a) over a square, through the density of t.

    The density is a trapezoid; on each linear piece alpha + beta t of one
    sign the integral against |t|^(-a) is elementary.
    """
    mpmath.mp.dps = 40
    e = mpmath.mpf(1) / k
    w1, w2 = sorted([abs(h * math.cos(theta)), abs(h * math.sin(theta))], reverse=True)
    lo = mpmath.mpf(t_center) - mpmath.mpf(w1 + w2) / 2
    w1, w2 = mpmath.mpf(w1), mpmath.mpf(w2)
    area = mpmath.mpf(h) ** 2

    def rho(t):
        u = t - lo
        if w2 == 0:
            return area / w1
        return area * min(u, w2, w1 + w2 - u) / (w1 * w2)

    def prim(t, alpha, beta):  # antiderivative of (alpha + beta t)|t|^(e-1)
        return alpha * mpmath.sign(t) * abs(t) ** e / e + beta * abs(t) ** (e + 1) / (e + 1)

    knots = sorted({lo, lo + w2, lo + w1, lo + w1 + w2, mpmath.mpf(0)})
    knots = [x for x in knots if lo <= x <= lo + w1 + w2]
    total = mpmath.mpf(0)
    for u, v in zip(knots, knots[1:]):
        if v - u == 0:
            continue
        beta = (rho(v) - rho(u)) / (v - u) if w2 else 0
        alpha = rho(u) - beta * u
        total += prim(v, alpha, beta) - prim(u, alpha, beta)
    return float(total)


@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2])
@pytest.mark.parametrize("t_center", [0.0, 0.013, -0.04, 0.5])
@pytest.mark.parametrize("k", [2, 64, 2048])
def test_band_integral_vs_oracle(theta, t_center, k):
    h = 0.1
    got = band_cell_integral(h, (math.cos(theta), math.sin(theta)), t_center, k)
    assert got == pytest.approx(_strip_oracle(h, theta, t_center, k), rel=1e-8)


def test_band_integral_3d_flat_limit():
    # normal along an axis: reduces to h^2 times the 1D integral
    h, t, k = 0.2, 0.03, 16
    a = (k - 1) / k
    one_d = k * (abs(t + h / 2) ** (1 / k) + abs(t - h / 2) ** (1 / k) * (1 if t - h / 2 < 0 else -1))
    got = band_cell_integral(h, (0.0, 0.0, 1.0), t, k)
    assert got == pytest.approx(h * h * one_d, rel=1e-12)
    assert a > 0


# config


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(R=0),
        dict(R=1, max_depth=0),
        dict(R=1, base_cells=0),
        dict(R=1, k_schedule=(8, 8, 32)),
        dict(R=1, k_schedule=(1, 8)),
        dict(R=1, k_schedule=()),
        dict(R=1, threads=0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        QuadratureConfig(**kwargs)


def test_fit_inverse_k_exact():
    ks = [128, 512, 2048]
    F, c, r = fit_inverse_k(ks, [3.0 + 2.0 / k for k in ks])
    assert F == pytest.approx(3.0) and c == pytest.approx(2.0) and r < 1e-12


# paraboloid against the exact oracle


@pytest.mark.parametrize("k", [8, 32, 128, 512, 2048])
def test_paraboloid_per_k(paraboloid_cells, k):
    assert paraboloid_cells.F(k) == pytest.approx(PARABOLOID_EXACT[k], rel=5e-5)


def test_paraboloid_estimate_fields(paraboloid_estimate):
    est = paraboloid_estimate
    assert [r.k for r in est.per_k] == [8, 32, 128, 512, 2048]
    assert est.monotone and est.h_measure == est.limit / 2
    assert est.h_measure == pytest.approx(2 * math.pi, rel=1e-4)
    assert "heuristic" in est.model
    jsonschema.validate(est.to_json(), ESTIMATE_SCHEMA)


def test_refinement_convergence(paraboloid, paraboloid_estimate):
    fine = build_cells(paraboloid, QuadratureConfig(R=1.0, base_cells=128))
    coarse = paraboloid_estimate.per_k[3]
    assert coarse.k == 512
    assert abs(fine.F(512) - coarse.F) < paraboloid_estimate.extrapolation_residual


def test_fixed_k_reuses_cells(paraboloid, paraboloid_cells):
    r = integrate_fixed_k(paraboloid, QuadratureConfig(R=1.0), 1000, cells=paraboloid_cells)
    assert r.k == 1000 and r.cells == paraboloid_cells.cells_evaluated and r.unresolved == 0


def test_thread_count_does_not_change_bits(paraboloid):
    cfg = dict(R=1.0, base_cells=32, max_depth=9, jitter_seed=3)
    a = build_cells(paraboloid, QuadratureConfig(**cfg, threads=1))
    b = build_cells(paraboloid, QuadratureConfig(**cfg, threads=3))
    assert [a.F(k) for k in (8, 512)] == [b.F(k) for k in (8, 512)]


def test_jitter_seed_changes_little(paraboloid):
    vals = [build_cells(paraboloid, QuadratureConfig(R=1.0, base_cells=32, max_depth=9, jitter_seed=s)).F(128) for s in (0, 1, 2)]
    assert max(vals) - min(vals) < 1e-4 * vals[0]


# other fields


def test_empty_zero_set():
    est = estimate_measure(AnalyticField("x^2+y^2+1", 2), QuadratureConfig(R=1.0))
    assert est.per_k[-1].F <= 0.02
    assert est.h_measure <= 0.01
    assert any("empty zero set" in w for w in est.warnings)


def test_distance_circle_k512(distance_circle_estimate):
    F512 = next(r.F for r in distance_circle_estimate.per_k if r.k == 512)
    assert F512 == pytest.approx(4 * math.pi, rel=0.03)
    assert not distance_circle_estimate.warnings


def test_square_reports_corner_cells(square_estimate):
    assert square_estimate.h_measure == pytest.approx(4.0, rel=1e-3)
    # the distance field is not planar at the four corners
    assert any("unresolved" in w for w in square_estimate.warnings)


def test_ellipse_vs_traced_length():
    f = AnalyticField("x^2/4 + y^2 - 1", 2)
    est = estimate_measure(f, QuadratureConfig(R=2.0))
    traced = zero_set_trace(f, (-2.5, -1.5, 2.5, 1.5), 0.005)
    L = sum(polyline_length(c) for c in traced)
    assert abs(2 * L - est.limit) / est.limit <= 0.02
    # complete elliptic integral: perimeter 9.68844822...
    assert est.h_measure == pytest.approx(9.688448220547675, rel=1e-3)


def sphere_oracle(k):
    """F(k) for |x|^2 - 1 in R^3, same singularity subtraction as the 2D oracle."""
    mpmath.mp.dps = 30
    a = mpmath.mpf(k - 1) / k
    phi = lambda r: (2 * r / (r + 1)) ** a * 4 * mpmath.pi * r**2
    p1 = phi(mpmath.mpf(1))
    return float((mpmath.quad(lambda r: (phi(r) - p1) * abs(r - 1) ** (-a), [0, 1, 2]) + p1 * 2 * k) / k)


def test_sphere_3d():
    f = AnalyticField("x^2+y^2+z^2-1", 3)
    cfg = QuadratureConfig(R=1.0, base_cells=16, max_depth=4)
    cells = build_cells(f, cfg)
    assert sphere_oracle(8) == pytest.approx(27.5134844166303, rel=1e-12)
    assert cells.F(8) == pytest.approx(27.5134844166303, rel=5e-4)
    est = estimate_measure(f, cfg, cells=cells)
    assert est.h_measure == pytest.approx(4 * math.pi, rel=0.01)


def test_two_k_fallback(paraboloid, paraboloid_cells):
    est = estimate_measure(paraboloid, QuadratureConfig(R=1.0, k_schedule=(512, 2048)), cells=paraboloid_cells)
    assert est.limit == est.per_k[-1].F
    assert any("fewer than 3" in w for w in est.warnings)


# sandwich diagnostics


def test_bound_diagnostics(paraboloid):
    c = circle_curve(1024)
    rep = bound_diagnostics(paraboloid, c, L=2.0, epsilon=0.0, samples=500)
    assert rep.sandwich_violations == 0
    rep = bound_diagnostics(paraboloid, c, L=2.0, epsilon=0.3, samples=2000)
    assert rep.sandwich_violations == 0
    assert rep.lipschitz_ratio == pytest.approx(0.3, rel=1e-6) and rep.warnings
    lo, hi = rep.jacobian_band
    assert lo == pytest.approx(0.7, rel=1e-3) and hi == pytest.approx(1.3, rel=1e-3)


def test_bound_diagnostics_refusals(paraboloid):
    c = circle_curve(1024)
    with pytest.raises(ValueError):
        bound_diagnostics(paraboloid, c, L=2.0, epsilon=1.5)
    with pytest.raises(ValueError):
        bound_diagnostics(paraboloid, c, L=0.0, epsilon=0.1)
    with pytest.raises(ValueError):
        bound_diagnostics(DistanceField(c), c, L=1.0, epsilon=0.1)
