from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wgbands import reduced_model as rm
from wgbands.reduced_model import ModelParams, PerturbationCoeffs

PI2 = math.pi ** 2


def _mp_roots(level, T, rho, count, nu_max=400.0):
    """Roots of the dispersion relation by mpmath bisection on a fine grid."""
    a = mpmath.mpf(T) * rho / 2

    def f(nu):
        nu = mpmath.mpf(nu)
        if nu > 0:
            s = mpmath.sqrt(nu)
            return mpmath.cos(s) - a * mpmath.sin(s) / s - level
        if nu < 0:
            s = mpmath.sqrt(-nu)
            return mpmath.cosh(s) - a * mpmath.sinh(s) / s - level
        return 1 - a - level

    lo = -((abs(float(a)) + 2) ** 2) - 1
    grid = np.linspace(lo, nu_max, 40001)
    vals = [f(x) for x in grid]
    roots = []
    for x0, x1, f0, f1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if f0 * f1 < 0:
            roots.append(float(mpmath.findroot(f, (x0, x1), solver="anderson")))
    return roots[:count]


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(theta=math.pi, T=1.0)
    with pytest.raises(ValueError):
        ModelParams(theta=0.3, T=0.0)
    with pytest.raises(ValueError):
        ModelParams.from_sin2theta(1.5, 2.0)
    p = ModelParams.from_sin2theta(-0.4, 2.0, 1.0)
    assert 0 <= p.theta < math.pi
    assert p.sin2theta == -0.4
    assert p.with_rho(3.0).sin2theta == -0.4


def test_dispersion_function_continuous_at_zero():
    p = ModelParams.from_sin2theta(0.7, 2.0, 1.3)
    xs = np.array([-2e-4, -1e-4, -1e-6, 0.0, 1e-6, 1e-4, 2e-4])
    f = rm.dispersion_function(xs, p)
    assert np.all(np.abs(np.diff(f)) < 1e-3)
    assert f[3] == pytest.approx(1 - p.coupling)
    # derivative against a central difference on both sides of the series cut
    for x in (-0.05, -0.011, -0.009, 0.0, 0.009, 0.011, 0.5, 30.0):
        d = 1e-6
        fd = (rm.dispersion_function(x + d, p) - rm.dispersion_function(x - d, p)) / (2 * d)
        assert rm.dispersion_derivative(x, p) == pytest.approx(fd, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("level,T,rho", [(0.3, 2.0, 1.0), (-0.7, 2.0, -3.0),
                                         (0.0, 1.0, 5.0), (0.95, 3.0, 0.4)])
def test_roots_match_mpmath(level, T, rho):
    p = ModelParams.from_sin2theta(0.5, T, rho)
    ours = rm.roots_below(level, p, 5)
    ref = _mp_roots(level, T, rho, 5)
    assert np.allclose(ours, ref, rtol=1e-10, atol=1e-10)


def test_kirchhoff_limit_rho_zero():
    # sin 2theta = 1, rho = 0: cos sqrt(nu) = cos eta, so nu = (eta + 2 pi k)^2 sorted
    p = ModelParams.from_sin2theta(1.0, 2.0, 0.0)
    eta = 0.7
    expected = sorted([(eta + 2 * math.pi * k) ** 2 for k in range(-3, 3)])[:5]
    assert np.allclose(rm.solve_nu_all(5, eta, p), expected, rtol=1e-10)
    for m in range(1, 5):
        assert rm.solve_nu(m, eta, p) == pytest.approx(expected[m - 1], rel=1e-10)


def test_double_root_counted_twice():
    # at eta = 0 with rho = 0 and level 1 the roots (2 pi k)^2 are tangencies
    p = ModelParams.from_sin2theta(1.0, 2.0, 0.0)
    nus = rm.solve_nu_all(5, 0.0, p)
    assert nus == pytest.approx([0.0, 4 * PI2, 4 * PI2, 16 * PI2, 16 * PI2], abs=1e-8)


def test_bands_tile_at_kirchhoff_points():
    for rho in (-2.0, 0.0, 0.5, 3.0):
        p = ModelParams.from_sin2theta(1.0, 2.0, rho)
        bands = rm.band_intervals(4, p)
        for b, c in zip(bands[:-1], bands[1:]):
            assert b.upper <= c.lower + 1e-10


def test_band_interval_matches_band_intervals():
    p = ModelParams.from_sin2theta(0.7, 2.0, 1.5)
    many = rm.band_intervals(4, p)
    for m in range(1, 5):
        one = rm.band_interval(m, p)
        assert one.lower == pytest.approx(many[m - 1].lower, abs=1e-12)
        assert one.upper == pytest.approx(many[m - 1].upper, abs=1e-12)
        assert one.width >= 0
    with pytest.raises(ValueError):
        rm.band_interval(0, p)


@settings(max_examples=40, deadline=None)
@given(theta=st.floats(0.01, math.pi / 2 - 0.01), rho=st.floats(-5, 5),
       T=st.floats(0.2, 4))
def test_band_symmetry_in_theta(theta, rho, T):
    base = rm.band_intervals(3, ModelParams(theta, T, rho))
    for other in (math.pi - theta, math.pi / 2 - theta):
        mirrored = rm.band_intervals(3, ModelParams(other, T, rho))
        for b, c in zip(base, mirrored):
            assert b.lower == pytest.approx(c.lower, abs=1e-9 * max(1, abs(b.lower)))
            assert b.upper == pytest.approx(c.upper, abs=1e-9 * max(1, abs(b.upper)))


def test_eta_half_pi_tan_oracle():
    # at eta = pi/2 the level is 0: tan sqrt(nu) = sqrt(nu) (2 / (T rho))
    T, rho = 2.0, 1.0
    p = ModelParams.from_sin2theta(0.7, T, rho)
    nus = rm.solve_nu_all(3, math.pi / 2, p)
    assert nus[0] == pytest.approx(0.0, abs=1e-10)  # sqrt(nu) = tan sqrt(nu) at the origin
    for nu in nus[1:]:
        s = mpmath.sqrt(nu)
        assert float(mpmath.tan(s) - s * 2 / (T * rho)) == pytest.approx(0.0, abs=1e-7)
    assert nus[1] == pytest.approx(20.190728556426, rel=1e-9)


def test_breathing_first_band_dives():
    p = ModelParams.from_sin2theta(0.7, 2.0)
    table = rm.breathing_sweep(p, np.arange(-10, 10.05, 0.1), 4)
    assert table.lower.shape == (201, 4)
    neg = table.negative
    assert not neg[:, 1:].any()
    idx = np.flatnonzero(neg[:, 0])
    assert table.rho[idx[0]] == pytest.approx(0.4)
    # the lower end crosses zero where 1 - rho = |sin 2 theta|, the upper end where
    # 1 - rho = -|sin 2 theta|; so the whole band is negative only for rho > 1.7
    whole = np.flatnonzero(table.upper[:, 0] < 0)
    assert table.rho[whole[0]] == pytest.approx(1.8)
    assert rm.band_interval(1, p.with_rho(0.3)).lower == pytest.approx(0.0, abs=1e-10)
    assert rm.band_interval(1, p.with_rho(1.7)).upper == pytest.approx(0.0, abs=1e-10)
    # bands are ordered for each rho
    assert np.all(table.upper[:, :-1] <= table.lower[:, 1:] + 1e-9)


def test_breathing_asymptotics():
    T, rho = 2.0, 30.0
    p = ModelParams.from_sin2theta(0.7, T, rho)
    b = rm.band_interval(1, p)
    centre = 0.5 * (b.lower + b.upper)
    assert centre == pytest.approx(-T ** 2 * rho ** 2 / 4, rel=0.05)
    assert b.width <= 1e-6
    law = rm.asymptotic_band_limits(1, p, "+inf")
    assert law.coefficient == -T ** 2 / 4
    # large |rho| approaches the Dirichlet-type limits
    for m in (2, 3):
        hi = rm.band_interval(m, p.with_rho(1e3))
        assert hi.lower == pytest.approx(rm.asymptotic_band_limits(m, p, "+inf"), rel=1e-2)
        lo = rm.band_interval(m, p.with_rho(-1e3))
        assert lo.upper == pytest.approx(rm.asymptotic_band_limits(m, p, "-inf"), rel=1e-2)
    with pytest.raises(ValueError):
        rm.asymptotic_band_limits(1, p, "sideways")


def test_band_table_roundtrip(tmp_path):
    p = ModelParams.from_sin2theta(0.7, 2.0)
    table = rm.breathing_sweep(p, [-1.0, 0.0, 2.5], 3)
    path = tmp_path / "bands.csv"
    table.write_csv(path)
    rows = rm.read_band_table(path)
    assert len(rows) == 9
    assert rows[0][:2] == (-1.0, 1)
    assert rows[-1][2] == pytest.approx(table.lower[2, 2], rel=1e-12)


def test_case_bands():
    assert rm.case_bands_exact("dirichlet", 0.3, 2) == pytest.approx(4 * PI2)
    assert rm.case_bands_exact("kirchhoff", 0.3, -1) == pytest.approx((0.3 - 2 * math.pi) ** 2)
    assert rm.case_bands_exact("anti_kirchhoff", 0.0, 0) == pytest.approx(PI2)
    with pytest.raises(ValueError):
        rm.case_bands_exact("dirichlet", 0.3, 0)
    with pytest.raises(ValueError):
        rm.case_bands_exact("robin", 0.3, 1)


def test_case_i_correction():
    M = np.array([[0.2, -0.1], [-0.1, 0.3]])
    lo, hi = rm.case_i_band_endpoints(M, 1)
    assert lo == pytest.approx(-2 * PI2 * (0.5 + 0.2))
    assert hi == pytest.approx(-2 * PI2 * (0.5 - 0.2))
    with pytest.raises(ValueError):
        rm.case_i_nu_tilde(np.array([[0.2, 0.1], [-0.1, 0.3]]), 1, 0.0)


def test_gap_matrix_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(200):
        c = PerturbationCoeffs(m_Omega=rng.normal(), M_Omega=rng.normal(),
                               Lambda0=(2 * int(rng.integers(0, 3)) + 1) ** 2 * PI2)
        t = rng.normal() * 2
        lm, lp, gap = rm.gap_matrix_eigen(t, c)
        ev = np.linalg.eigvalsh(rm.gap_matrix(t, c))
        assert np.allclose([lm, lp], ev, rtol=1e-12, atol=1e-10)
        assert gap == pytest.approx(lp - lm)


def test_gap_vanishes_only_on_the_line():
    c = PerturbationCoeffs(m_Omega=0.25, M_Omega=-0.25, Lambda0=9 * PI2)
    assert rm.gap_matrix_eigen(0.0, c)[2] == 0.0
    assert rm.gap_matrix_eigen(1e-8, c)[2] > 0
    with pytest.raises(ValueError):
        rm.gap_matrix_eigen(0.0, PerturbationCoeffs(0.1, 0.1, 4 * PI2))


def test_first_order_shift():
    c = PerturbationCoeffs(m_Omega=0.3, M_Omega=0.1, Lambda0=PI2)
    assert rm.first_order_shift(2.0, c) == pytest.approx(0.8)


def test_below_threshold_band_shrinks():
    lo1, hi1 = rm.below_threshold_band(4.59, -1.2, -1.0, 0.1)
    lo2, hi2 = rm.below_threshold_band(4.59, -1.2, -1.0, 0.05)
    assert lo1 < 4.59 / 0.01 < hi1
    assert (hi2 - lo2) / (4.59 / 0.0025) < (hi1 - lo1) / (4.59 / 0.01)
    with pytest.raises(ValueError):
        rm.below_threshold_band(12.0, 1, 1, 0.1)
