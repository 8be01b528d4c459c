import math

import mpmath
import numpy as np
import pytest

from quartic_helmholtz.errors import DomainError, ExponentOutOfRange, GridTooCoarse, ParamsOutsideA1, UnsupportedCase
from quartic_helmholtz.kernels import (
    Case,
    ProblemParams,
    hankel1,
    hankel1_asymptotic,
    hankel1_small,
    helmholtz_green,
    kernel_split,
    nonresonant_profile,
    partial_fraction_symbol,
    psi_hat,
    quartic_green,
    quartic_green_origin,
    resonant_profile,
    split_roots,
)
from quartic_helmholtz.spectral import SpectralGrid


@pytest.mark.parametrize(
    "alpha,beta,expected",
    [(-1.0, 0.0, (1.0, -1.0, Case.NEG_ALPHA)), (4.0, -5.0, (4.0, 1.0, Case.TWO_HELMHOLTZ)),
     (0.0, -2.0, (2.0, 0.0, Case.ZERO_ALPHA))],
)
def test_split_roots_examples(alpha, beta, expected):
    a1, a2, case = split_roots(alpha, beta)
    assert a1 == pytest.approx(expected[0], abs=1e-15)
    assert a2 == pytest.approx(expected[1], abs=1e-15)
    assert case is expected[2]


def test_split_roots_vieta():
    rng = np.random.default_rng(3)
    for _ in range(200):
        alpha = rng.uniform(-5, 5)
        beta = -2 * math.sqrt(max(alpha, 0)) - rng.uniform(0.01, 5) if alpha > 0 else rng.uniform(-5, 5)
        a1, a2, _ = split_roots(alpha, beta)
        assert a1 > a2
        assert a1 + a2 == pytest.approx(-beta, abs=1e-12)
        assert a1 * a2 == pytest.approx(alpha, abs=1e-12)


@pytest.mark.parametrize("alpha,beta", [(1.0, -2.0), (1.0, 0.0), (0.0, 0.0), (0.0, 1.0)])
def test_outside_a1_rejected(alpha, beta):
    with pytest.raises(ParamsOutsideA1, match="A1"):
        split_roots(alpha, beta)


def test_zero_alpha_needs_three_dimensions():
    with pytest.raises(ParamsOutsideA1):
        ProblemParams(0.0, -1.0, 2)
    assert ProblemParams(0.0, -1.0, 3).case is Case.ZERO_ALPHA


def test_exponent_range_enforced():
    ProblemParams(-1.0, 0.0, 2, p=7)
    with pytest.raises(ExponentOutOfRange):
        ProblemParams(-1.0, 0.0, 2, p=6)
    with pytest.raises(ExponentOutOfRange):
        ProblemParams(-1.0, 0.0, 5, p=10)


def test_hankel_half_order_closed_form():
    val = hankel1(0.5, math.pi)
    assert abs(val - (-1j) * math.sqrt(2 / math.pi**2) * np.exp(1j * math.pi)) < 1e-14


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 1.5, 2.5])
@pytest.mark.parametrize("r", [1e-3, 0.7, 5.0, 40.0])
def test_hankel_matches_mpmath(nu, r):
    ref = complex(mpmath.hankel1(nu, r))
    assert abs(hankel1(nu, r) - ref) <= 1e-12 * abs(ref)


def test_hankel_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        hankel1(0.0, 0.0)


def test_hankel_large_argument_remainder():
    r = np.geomspace(20, 400, 12)
    rem = np.abs(hankel1(0.5, r) * np.sqrt(np.pi * r / 2) - np.exp(1j * (r - np.pi / 2)))
    assert rem.max() < 1e-12  # order 1/2 is exact
    rem = np.abs(hankel1(0.0, r) - hankel1_asymptotic(0.0, r)) * np.sqrt(np.pi * r / 2)
    assert np.polyfit(np.log(r), np.log(rem), 1)[0] == pytest.approx(-1.0, abs=0.1)


@pytest.mark.parametrize("dim", [2, 3, 4, 5])
def test_hankel_small_argument(dim):
    r = 1e-3
    assert abs(hankel1_small(dim, r) / hankel1((dim - 2) / 2, r) - 1) < 1e-2


def test_helmholtz_green_examples():
    assert abs(helmholtz_green(1.0, 1.0, 3) - np.exp(1j) / (4 * math.pi)) < 1e-14
    assert abs(helmholtz_green(0.0, 2.0, 3) - 1 / (8 * math.pi)) < 1e-14
    r = np.array([0.3, 2.0, 9.0])
    assert np.allclose(helmholtz_green(-1.0, r, 3), np.exp(-r) / (4 * math.pi * r), rtol=1e-13, atol=0)


def test_helmholtz_green_two_dimensions():
    r = 2.5
    assert abs(helmholtz_green(4.0, r, 2) - 0.25j * complex(mpmath.hankel1(0, 2 * r))) < 1e-14
    assert abs(helmholtz_green(-4.0, r, 2) - complex(mpmath.besselk(0, 2 * r)) / (2 * math.pi)) < 1e-14


def test_quartic_green_closed_form_three_dimensions():
    params = ProblemParams(-1.0, 0.0, 3)
    r = np.geomspace(1e-3, 100, 400)
    exact = (np.exp(1j * r) - np.exp(-r)) / (8 * math.pi * r)
    assert np.max(np.abs(quartic_green(params, r) / exact - 1)) < 1e-10
    assert abs(quartic_green_origin(params) - (1 + 1j) / (8 * math.pi)) < 1e-14


def test_quartic_green_four_dimensions_near_origin():
    params = ProblemParams(-1.0, 0.0, 4)
    r = 1e-4
    # (g_1 - g_{-1}) / 2 in N = 4; both terms are ~1/r^2, so cancel at 40 digits
    with mpmath.workdps(40):
        rr = mpmath.mpf(r)
        g1 = 1j / 4 * (1 / (2 * mpmath.pi * rr)) * mpmath.hankel1(1, rr)
        g2 = 1 / (2 * mpmath.pi) ** 2 / rr * mpmath.besselk(1, rr)
        ref = complex((g1 - g2) / 2)
    assert abs(quartic_green(params, r) - ref) < 1e-10 * abs(ref)


def test_origin_limit_singular_in_four_dimensions():
    with pytest.raises(UnsupportedCase):
        quartic_green_origin(ProblemParams(-1.0, 0.0, 4))


def test_partial_fraction_symbol_example():
    params = ProblemParams(-1.0, 0.0, 3)
    assert partial_fraction_symbol(params, 2.0) == pytest.approx(1 / 3, rel=1e-15)


def test_psi_hat_plateau_and_zero():
    params = ProblemParams(-1.0, 0.0, 2)
    assert psi_hat(params, 1.0) == 1.0
    assert psi_hat(params, 4 / 3) == 0.0
    rho = np.linspace(0, 3, 301)
    vals = psi_hat(params, rho)
    assert vals.min() >= 0 and vals.max() <= 1


def test_psi_hat_overlap_raises():
    with pytest.raises(GridTooCoarse):
        psi_hat(ProblemParams(1.0, -2.01, 3), np.array([1.0]))


def test_kernel_split_reassembles():
    params = ProblemParams(-1.0, 0.0, 2)
    grid = SpectralGrid(2, 32.0, 256)
    split = kernel_split(params, grid)
    from quartic_helmholtz.kernels import quartic_green_samples

    g = quartic_green_samples(params, np.sqrt(grid.r2()))
    total = split.g1.values + split.g2.values
    assert np.max(np.abs(total - g)) < 1e-13 * np.max(np.abs(g))


def _envelope_slope(profile, params, r, samples=16):
    k = math.sqrt(params.a1)
    env = [np.max(np.abs(profile(params, np.linspace(x, x + 2 * math.pi / k, samples)))) for x in r]
    return np.polyfit(np.log(r), np.log(env), 1)[0]


@pytest.mark.parametrize("dim", [2, 3])
def test_resonant_tail_slope(dim):
    params = ProblemParams(-1.0, 0.0, dim)
    slope = _envelope_slope(resonant_profile, params, np.geomspace(10, 80, 8))
    assert slope == pytest.approx((1 - dim) / 2, abs=0.1)


def test_resonant_profile_matches_grid_split():
    params = ProblemParams(-1.0, 0.0, 3)
    grid = SpectralGrid(3, 48.0, 128)
    split = kernel_split(params, grid)
    c = grid.points // 2
    idx = [c + 8, c + 20, c + 40]
    r = grid.x[idx]
    ref = split.g1.values[idx, c, c]
    # the grid split carries the periodic images of G_2 (a ~1e-5 real offset on this box)
    assert np.max(np.abs(resonant_profile(params, r) - ref)) < 5e-3 * np.max(np.abs(ref))


def test_nonresonant_tail_decays_faster_than_dimension():
    # the C-infinity cutoff has transition width sqrt(a1)/12, so the
    # asymptotic regime starts well beyond r = 12/sqrt(a1)
    params = ProblemParams(-1.0, 0.0, 3)
    assert _envelope_slope(nonresonant_profile, params, np.geomspace(60, 600, 6)) <= -3.0


def test_nonresonant_tail_zero_alpha_keeps_laplace_decay():
    # 1/sigma ~ -1/(a1 |xi|^2) at the origin, so G_2 inherits the r^{2-N} Laplace tail
    params = ProblemParams(0.0, -1.0, 3)
    r = np.geomspace(100, 400, 4)
    g2 = np.asarray(nonresonant_profile(params, r))
    lap = -1.0 / (4 * math.pi * r) / params.disc
    assert np.max(np.abs(g2 / lap - 1)) < 0.05
