"""Fast invariant suite behind ``quartic-helmholtz selfcheck``.

Each check is an exact or closed-form identity that runs in well under a
second; together they catch a broken install or a regression in the core
conventions.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np


def _symbol_identity():
    from .kernels import ProblemParams, partial_fraction_symbol

    rng = np.random.default_rng(0)
    worst = 0.0
    for alpha, beta in ((-1.0, 0.0), (2.0, -3.0), (-0.5, 1.0)):
        params = ProblemParams(alpha, beta, 3)
        rho2 = rng.uniform(0.0, 10.0, 1000)
        exact = 1.0 / params.symbol(rho2)
        worst = max(worst, float(np.max(np.abs(partial_fraction_symbol(params, rho2) / exact - 1.0))))
    return worst < 1e-10, worst


def _green_origin():
    from .kernels import ProblemParams, quartic_green_origin

    val = quartic_green_origin(ProblemParams(-1.0, 0.0, 3))
    err = abs(val - (1 + 1j) / (8 * math.pi))
    return err < 1e-14, err


def _zero_maps_to_zero():
    from .resolvent import QuarticResolvent
    from .kernels import ProblemParams
    from .spectral import Field, SpectralGrid

    grid = SpectralGrid(2, 8.0, 32)
    res = QuarticResolvent(ProblemParams(-1.0, 0.0, 2), grid)
    out = res.apply(Field(grid, np.zeros(grid.shape)))
    return bool(np.all(out.values == 0)), float(np.abs(out.values).max())


def _fft_roundtrip():
    from .spectral import Field, SpectralGrid, forward_ft, inverse_ft

    grid = SpectralGrid(2, 4.0, 32)
    f = Field(grid, np.random.default_rng(1).normal(size=grid.shape))
    err = float(np.abs(inverse_ft(forward_ft(f)).values - f.values).max())
    return err < 1e-12, err


def _estimate_endpoints():
    from .analysis import in_estimate_region

    ok = in_estimate_region(3, Fraction(4, 3), Fraction(4)) and in_estimate_region(5, Fraction(10, 9), Fraction(10))
    ok = ok and not in_estimate_region(4, Fraction(3, 2), Fraction(3))
    return bool(ok), None


def _radiation_of_zero():
    from .analysis import radiation_residual
    from .kernels import ProblemParams
    from .spectral import Field, SpectralGrid

    grid = SpectralGrid(2, 8.0, 32)
    r = radiation_residual(Field(grid, np.zeros(grid.shape, dtype=complex)), ProblemParams(-1.0, 0.0, 2), [2.0, 4.0])
    return bool(np.all(r == 0)), float(np.max(r))


def _exponential_decay_flag():
    from .analysis import decay_fit
    from .spectral import Field, SpectralGrid

    grid = SpectralGrid(2, 32.0, 256)
    fit = decay_fit(Field(grid, np.exp(-grid.radius())), (1.0, 24.0))
    return fit.super_polynomial, fit.slope


def _trivial_radial_data():
    from .kernels import ProblemParams
    from .radial import radial_shoot

    tr = radial_shoot(ProblemParams(-1.0, 0.0, 3, p=5), 0.0, 0.0, 10.0)
    return tr.trivial and bool(np.all(tr.u == 0)), None


CHECKS = {
    "symbol_partial_fractions": _symbol_identity,
    "green_origin_limit": _green_origin,
    "resolvent_of_zero": _zero_maps_to_zero,
    "fft_roundtrip": _fft_roundtrip,
    "estimate_region_endpoints": _estimate_endpoints,
    "radiation_of_zero": _radiation_of_zero,
    "exponential_decay_flagged": _exponential_decay_flag,
    "trivial_radial_data": _trivial_radial_data,
}


def run_checks() -> list[dict]:
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            passed, value = fn()
            msg = None
        except Exception as exc:  # a crashing check is a failed check
            passed, value, msg = False, None, f"{type(exc).__name__}: {exc}"
        out.append({"name": name, "passed": bool(passed), "value": value, "error": msg,
                    "seconds": time.perf_counter() - t0})
    return out
