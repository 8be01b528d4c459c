import math

import numpy as np
import pytest

from quartic_helmholtz.errors import TagMismatch
from quartic_helmholtz.kernels import ProblemParams, helmholtz_green, quartic_green_samples
from quartic_helmholtz.resolvent import (
    EpsSchedule,
    QuarticResolvent,
    Truncation,
    apply_operator,
    apply_quartic_resolvent,
    apply_real_resolvent,
    apply_resolvent_eps,
    check_scaling,
    check_symmetry,
    kernel_convolution,
    padded_layout,
    pde_residual,
    richardson,
    windowed_error,
)
from quartic_helmholtz.spectral import FREQUENCY, Field, SpectralGrid, forward_ft, inverse_ft, mollified_delta

NEG = ProblemParams(-1.0, 0.0, 2)


def bump(grid, rng, spread=1.0, scales=(0.6, 1.4)):
    xs = grid.coords()
    c = rng.normal(scale=spread, size=grid.dim)
    s = rng.uniform(*scales)
    k = rng.normal(size=grid.dim)
    env = np.exp(-sum((x - ci) ** 2 for x, ci in zip(xs, c)) / (2 * s * s))
    return Field(grid, env * np.cos(sum(ki * x for ki, x in zip(k, xs))))


def spectral_field(grid, profile):
    """Real field with a radial spectrum ``profile(|xi|)``."""
    F = grid.radial_eval(profile).astype(complex)
    return inverse_ft(Field(grid, F, FREQUENCY)).real


def test_eps_schedule_validation():
    with pytest.raises(ValueError):
        EpsSchedule((1e-3, 2e-3))
    with pytest.raises(ValueError):
        EpsSchedule((1e-3,))
    s = EpsSchedule.geometric(1e-2, 4, 2)
    assert s.eps_values == (1e-2, 5e-3, 2.5e-3, 1.25e-3)


def test_schedule_respects_clearance():
    grid = SpectralGrid(2, 16.0, 128)
    s = EpsSchedule.for_grid(grid, NEG)
    assert s.eps_values[0] <= grid.shell_clearance((NEG.a1, NEG.a2)) / 4


def test_richardson_exact_on_polynomials():
    eps = np.array([0.1 * 0.5**k for k in range(5)])
    vals = [np.array([3.0 + 2 * e - 5 * e**2 + e**3]) for e in eps]
    lim, err = richardson(vals, 3)
    assert lim[0] == pytest.approx(3.0, abs=1e-13)


def test_schrodinger_side_inverse():
    grid = SpectralGrid(2, 8.0, 64)
    f = bump(grid, np.random.default_rng(0), 0.5)
    u = apply_resolvent_eps(-1.0, 0.0, f, boundary="periodic")
    F = forward_ft(u)
    back = inverse_ft(F.like(F.values * (grid.rho2() + 1.0))).values
    assert np.max(np.abs(back - f.values)) < 1e-10 * np.max(np.abs(f.values))


def test_off_shell_symbol_arithmetic():
    grid = SpectralGrid(2, 16.0, 128)
    # spectrum supported in |xi|^2 >= a + 1 with a = 1
    f = spectral_field(grid, lambda r: np.where(r > 1.6, np.exp(-((r - 2.5) ** 2)), 0.0))
    eps = 1e-3
    u = apply_resolvent_eps(1.0, eps, f, boundary="periodic")
    F = forward_ft(f).values
    ref = inverse_ft(Field(grid, F / (grid.rho2() - 1.0), FREQUENCY)).values
    assert np.max(np.abs(u.values - ref)) <= 2 * eps * np.max(np.abs(F))


def test_quartic_resolvent_off_shells_matches_symbol():
    grid = SpectralGrid(2, 16.0, 128)
    f = spectral_field(grid, lambda r: np.where(r > 1.8, np.exp(-((r - 3.0) ** 2)), 0.0))
    u = apply_quartic_resolvent(NEG, f, boundary="periodic")
    F = forward_ft(f).values
    ref = inverse_ft(Field(grid, F / NEG.symbol(grid.rho2()), FREQUENCY)).values
    assert np.max(np.abs(u.values - ref)) < 1e-10 * np.max(np.abs(ref))


def test_zero_maps_to_zero():
    grid = SpectralGrid(2, 8.0, 32)
    u = apply_quartic_resolvent(NEG, Field(grid, np.zeros(grid.shape)))
    assert np.all(u.values == 0)


def test_requires_physical_input():
    grid = SpectralGrid(2, 8.0, 32)
    with pytest.raises(TagMismatch):
        apply_resolvent_eps(1.0, 0.1, Field(grid, np.zeros(grid.shape), FREQUENCY))


@pytest.mark.parametrize("pad", [False, True])
def test_inverse_on_band_limited_fields(pad):
    grid = SpectralGrid(2, 16.0, 128)
    res = QuarticResolvent(NEG, grid, pad=pad)
    rng = np.random.default_rng(4)
    for _ in range(3):
        # without padding, band-limited sources must sit well inside the window
        f = bump(grid, rng) if pad else bump(grid, rng, 0.5, (0.6, 0.9))
        u = res.apply(f, extended=pad)
        if pad:
            f_ext = Field(res.work_grid, res.embed(f.values))
            frac = grid.half_width / res.work_grid.half_width
            assert pde_residual(u, f_ext, NEG, window=frac) < 1e-10
        else:
            # narrow sources leave a ~1e-11 spectral tail at Nyquist, which L scales by |xi|^4
            assert pde_residual(u, f, NEG, window=res.window) < 1e-9


def test_real_resolvent_even_input_gives_even_output():
    grid = SpectralGrid(2, 16.0, 128)
    xs = grid.coords()
    f = Field(grid, np.exp(-(xs[0] ** 2 + xs[1] ** 2)) * np.cos(1.3 * xs[0]))
    u = apply_real_resolvent(NEG, f).values
    c = grid.points // 2
    inner = u[1:, 1:]
    assert np.isrealobj(u)
    assert np.max(np.abs(inner - inner[::-1, ::-1])) < 1e-12 * np.max(np.abs(u))
    assert u[c, c] == pytest.approx(u[c, c], abs=0)


def test_symmetry_defect():
    grid = SpectralGrid(2, 16.0, 128)
    res = QuarticResolvent(NEG, grid)
    rng = np.random.default_rng(5)
    f = bump(grid, rng)
    assert check_symmetry(NEG, f, f, op=res) == 0.0
    for _ in range(3):
        assert check_symmetry(NEG, bump(grid, rng), bump(grid, rng), op=res) < 1e-10


def test_scaling_identity():
    grid = SpectralGrid(2, 16.0, 128)
    xs = grid.coords()
    f = Field(grid, np.exp(-(xs[0] ** 2 + xs[1] ** 2) / 2) * np.cos(2.5 * xs[0]))
    assert check_scaling(1.0, f) == 0.0
    for a in (4.0, 0.25):
        assert check_scaling(a, f) < 1e-8


def test_pde_residual_contract():
    grid = SpectralGrid(2, 8.0, 64)
    f = bump(grid, np.random.default_rng(7), 0.3)
    assert pde_residual(Field(grid, np.zeros(grid.shape)), f, NEG) == pytest.approx(1.0)
    u = apply_quartic_resolvent(NEG, f, boundary="periodic")
    noise = np.random.default_rng(8).normal(size=grid.shape) * np.exp(-grid.r2() / 4)
    r1 = pde_residual(u.like(u.values + 1e-6 * noise), f, NEG)
    r2 = pde_residual(u.like(u.values + 2e-6 * noise), f, NEG)
    assert r2 / r1 == pytest.approx(2.0, rel=1e-3)


def test_operator_application():
    grid = SpectralGrid(2, 12.0, 128)
    xs = grid.coords()
    r2 = xs[0] ** 2 + xs[1] ** 2
    u = Field(grid, np.exp(-r2 / 2))
    # Delta e^{-r^2/2} = (r^2 - 2) e^{-r^2/2}; Delta^2 = (r^4 - 8 r^2 + 8) e^{-r^2/2}
    exact = (r2**2 - 8 * r2 + 8) * np.exp(-r2 / 2) + u.values * NEG.alpha
    assert np.max(np.abs(apply_operator(NEG, u).values - exact)) < 1e-8


def test_truncation_nodes_scale_with_width():
    grid = SpectralGrid(2, 16.0, 128)
    assert Truncation.nodes_for(grid, 0.0) == 96
    assert Truncation.nodes_for(grid, 40.0) > 96


def test_padded_layout_reach():
    grid = SpectralGrid(2, 16.0, 128)
    work, trunc = padded_layout(grid)
    reach = 2 * math.sqrt(2) * 16.0
    assert work.h == grid.h
    assert trunc.inner == pytest.approx(reach)
    assert 2 * work.half_width >= reach + trunc.radius


def test_helmholtz_resolvent_converges_to_green():
    # mollifier width ~ h: the windowed error falls as the grid refines
    errs = []
    for m in (64, 128):
        grid = SpectralGrid(3, 16.0, m)
        u = apply_resolvent_eps(1.0, 0.0, mollified_delta(grid))
        ref = grid.radial_eval(lambda r: np.asarray(helmholtz_green(1.0, np.maximum(r, 1e-9), 3)), "physical", complex)
        errs.append(windowed_error(u, ref, exclude=2.0))
    assert errs[1] < errs[0] / 4
    assert errs[1] < 5e-3


def test_green_equivalence_and_kernel_oracle():
    params = ProblemParams(-1.0, 0.0, 3)
    grid = SpectralGrid(3, 12.0, 128)
    d = mollified_delta(grid)
    u = apply_real_resolvent(params, d)
    ref = grid.radial_eval(lambda r: quartic_green_samples(params, r).real, "physical")
    assert windowed_error(u, ref, exclude=1.5) < 1e-3
    v = kernel_convolution(params, d, pad=1)
    assert windowed_error(v, u.values) < 1e-3
