import math

import numpy as np
import pytest
from scipy import integrate

from quartic_helmholtz.kernels import ProblemParams
from quartic_helmholtz.radial import (
    ShootOptions,
    Trajectory,
    dichotomy_sweep,
    disk_grid,
    linearized_solution,
    radial_operator,
    radial_resolvent,
    radial_shoot,
    regular_modes,
    spherical_mean,
)
from quartic_helmholtz.resolvent import apply_real_resolvent
from quartic_helmholtz.spectral import Field, SpectralGrid

NEG3 = ProblemParams(-1.0, 0.0, 3, p=5)
TWO3 = ProblemParams(4.0, -5.0, 3, p=5)


def gauss(s):
    return math.exp(-s * s)


def test_trivial_data():
    tr = radial_shoot(NEG3, 0.0, 0.0, 10.0)
    assert tr.trivial and tr.classification is Trajectory.UNDETERMINED
    assert np.all(tr.u == 0)


def test_regular_modes_at_origin():
    for params in (NEG3, TWO3, ProblemParams(0.0, -1.0, 3, p=5), ProblemParams(-1.0, 0.0, 2, p=7)):
        for phi in regular_modes(params, np.array([1e-8])):
            assert phi[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("params,r_hi", [(TWO3, 20.0), (NEG3, 15.0)])
def test_linear_regime(params, r_hi):
    # NegAlpha data are chosen on the oscillatory mode; the e^r mode amplifies start-up
    # errors by ~e^{20} at r = 20, so that case stops at r = 15
    u0 = 1e-6
    u2 = 3e-7 if params is TWO3 else -params.a1 * u0 / params.dim
    tr = radial_shoot(params, u0, u2, r_hi)
    m = tr.r >= 1.0
    lin = linearized_solution(params, u0, u2, tr.r[m])
    assert np.max(np.abs(tr.u[m] - lin)) < 1e-4 * np.max(np.abs(lin))


def test_start_radius_is_immaterial():
    a = radial_shoot(TWO3, 0.3, -0.1, 5.0)
    b = radial_shoot(TWO3, 0.3, -0.1, 5.0, ShootOptions(r0=1e-4))
    assert b.u[-1] == pytest.approx(a.u[-1], rel=1e-8)


def test_small_oscillatory_data_bounded():
    tr = radial_shoot(TWO3, 1e-3, 0.0, 200.0)
    assert tr.classification is Trajectory.BOUNDED_OSCILLATORY


def test_growing_mode_blows_up():
    tr = radial_shoot(NEG3, 0.5, 0.5, 200.0)
    assert tr.classification is Trajectory.BLOWUP
    assert tr.blowup_radius < 200.0
    assert abs(tr.u[-1]) == pytest.approx(1e6, rel=1e-6)


def test_tolerance_halving_consistency():
    a = radial_shoot(TWO3, 1e-2, 0.0, 100.0)
    b = radial_shoot(TWO3, 1e-2, 0.0, 100.0, ShootOptions(rtol=5e-11))
    assert abs(a.u[-1] - b.u[-1]) < 1e-7 * np.max(np.abs(a.u))


def test_sweep_empty_and_deterministic():
    out = dichotomy_sweep(NEG3, [])
    assert out["count"] == 0 and out["rows"] == []
    grid = disk_grid(0.1, 3, seed=1)
    assert np.all(np.hypot(grid[:, 0], grid[:, 1]) <= 0.1)
    a = dichotomy_sweep(TWO3, grid, r_max=30.0, seed=1)
    b = dichotomy_sweep(TWO3, disk_grid(0.1, 3, seed=1), r_max=30.0, seed=1)
    assert a == b
    assert sum(a["fractions"].values()) == pytest.approx(1.0)


@pytest.mark.parametrize("dim", [2, 3, 4, 5])
def test_spherical_mean_of_squared_distance(dim):
    # the mean of |x - y|^2 over |y| = s is r^2 + s^2
    for r, s in ((1.0, 0.5), (0.7, 2.0)):
        assert spherical_mean(lambda t: t * t, r, s, dim) == pytest.approx(r * r + s * s, rel=1e-10)
        assert spherical_mean(lambda t: 1.0, r, s, dim) == pytest.approx(1.0, rel=1e-10)


def test_radial_resolvent_mean_value_oracle():
    # outside the source each shell term is g_a(r) times the regular mode, so
    # (Re G * f)(r) = [cos(r) F_1 - e^{-r} F_2] / (8 pi r)
    params = ProblemParams(-1.0, 0.0, 3)

    def f(s):
        return math.exp(-1.0 / (1.0 - (s / 0.5) ** 2)) if s < 0.5 else 0.0

    F1 = integrate.quad(lambda s: f(s) * math.sin(s) * 4 * math.pi * s, 0, 0.5, epsabs=0, epsrel=1e-13)[0]
    F2 = integrate.quad(lambda s: f(s) * math.sinh(s) * 4 * math.pi * s, 0, 0.5, epsabs=0, epsrel=1e-13)[0]
    r = np.array([0.7, 1.5, 3.0, 7.0])
    u = radial_resolvent(params, f, r, 0.5)
    exact = (np.cos(r) * F1 - np.exp(-r) * F2) / (8 * math.pi * r)
    assert np.max(np.abs(u / exact - 1)) < 1e-6


def test_radial_resolvent_linear():
    params = ProblemParams(-1.0, 0.0, 3)
    r = np.array([0.5, 2.0])
    a = radial_resolvent(params, gauss, r, 6.0)
    b = radial_resolvent(params, lambda s: s * gauss(s), r, 6.0)
    c = radial_resolvent(params, lambda s: 2 * gauss(s) - 3 * s * gauss(s), r, 6.0)
    assert np.allclose(c, 2 * a - 3 * b, rtol=1e-8, atol=0)


def test_radial_resolvent_matches_grid_resolvent():
    params = ProblemParams(-1.0, 0.0, 3)
    grid = SpectralGrid(3, 12.0, 64)
    u = apply_real_resolvent(params, Field(grid, np.exp(-grid.r2()))).values
    c = grid.points // 2
    idx = np.arange(c, c + 17, 2)
    ur = radial_resolvent(params, gauss, grid.x[idx], 6.0)
    assert np.linalg.norm(u[idx, c, c] - ur) < 1e-3 * np.linalg.norm(ur)


def test_radial_resolvent_operator_residual():
    params = ProblemParams(-1.0, 0.0, 3)
    h = 0.025
    r = np.arange(0.5, 1.5 + h / 2, h)
    u = radial_resolvent(params, gauss, r, 6.0)
    # second-order differences at h and 2h, combined by one Richardson step
    fine = radial_operator(params, u, r)[2::2]
    coarse = radial_operator(params, u[::2], r[::2])
    n = min(len(fine), len(coarse))
    lu = (4 * fine[:n] - coarse[:n]) / 3
    f = np.exp(-r[::2][2:-2][:n] ** 2)
    assert np.linalg.norm(lu - f) < 1e-4 * np.linalg.norm(f)
