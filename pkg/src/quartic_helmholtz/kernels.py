"""Green's functions of the Helmholtz, Schrodinger and fourth-order operators.

The fourth-order operator ``L = Delta^2 - beta*Delta + alpha`` factors as
``(-Delta - a1)(-Delta - a2)`` where ``a1 > a2`` are the roots of
``t^2 + beta*t + alpha``.  Its outgoing fundamental solution is

    G = (g_{a1} - g_{a2}) / sqrt(beta^2 - 4*alpha)

with ``g_a`` the outgoing fundamental solution of ``-Delta - a``.  All kernels
here are radial and evaluated as functions of ``r = |x|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Union

import mpmath
import numpy as np
from scipy import integrate, special

from .errors import (
    DomainError,
    ExponentOutOfRange,
    GridTooCoarse,
    ParamsOutsideA1,
    QuadratureFailure,
    UnsupportedCase,
)

if TYPE_CHECKING:
    from .spectral import Field

GammaSpec = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


class Case(str, Enum):
    """Sign pattern of the roots ``(a1, a2)``."""

    NEG_ALPHA = "NegAlpha"
    TWO_HELMHOLTZ = "TwoHelmholtz"
    ZERO_ALPHA = "ZeroAlpha"


def split_roots(alpha: float, beta: float) -> tuple[float, float, Case]:
    """Roots ``a1 > a2`` of ``t^2 + beta t + alpha`` and the parameter case.

    Raises
    ------
    ParamsOutsideA1
        If ``(alpha, beta)`` is not oscillatory: ``alpha > 0`` with
        ``beta >= -2 sqrt(alpha)``, or ``alpha = 0`` with ``beta >= 0``.
    """
    alpha = float(alpha)
    beta = float(beta)
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise ParamsOutsideA1("alpha and beta must be finite")
    if alpha < 0:
        case = Case.NEG_ALPHA
    elif alpha > 0:
        if not beta < -2.0 * math.sqrt(alpha):
            raise ParamsOutsideA1(
                f"alpha={alpha} > 0 requires beta < -2*sqrt(alpha) = {-2.0 * math.sqrt(alpha)}"
                f" (assumption A1); got beta={beta}"
            )
        case = Case.TWO_HELMHOLTZ
    else:
        if not beta < 0:
            raise ParamsOutsideA1(f"alpha = 0 requires beta < 0 (assumption A1); got beta={beta}")
        case = Case.ZERO_ALPHA
    disc = math.sqrt(beta * beta - 4.0 * alpha)
    a1 = 0.5 * (-beta + disc)
    if case is Case.ZERO_ALPHA:
        a2 = 0.0
    else:
        # Vieta avoids cancellation in the smaller root.
        a2 = alpha / a1
    return a1, a2, case


def exponent_range(dim: int) -> tuple[Fraction, Fraction | None]:
    """Open interval ``(2(N+1)/(N-1), 2N/(N-4))`` of admissible ``p``; upper end None means infinity."""
    lo = Fraction(2 * (dim + 1), dim - 1)
    hi = Fraction(2 * dim, dim - 4) if dim > 4 else None
    return lo, hi


@dataclass(frozen=True, eq=False)
class ProblemParams:
    """Coefficients of ``Delta^2 u - beta Delta u + alpha u = Gamma |u|^{p-2} u``.

    Parameters
    ----------
    alpha, beta : float
        Operator coefficients; must fall in one of the oscillatory cases.
    dim : int
        Space dimension ``N >= 2``.
    p : float or None
        Nonlinearity exponent.  Kernel-only computations may leave it unset.
    gamma : float, ndarray or callable
        Coefficient ``Gamma``: a positive constant, an array of grid samples,
        or a callable evaluated on grid coordinates.
    """

    alpha: float
    beta: float
    dim: int
    p: float | None = None
    gamma: GammaSpec = 1.0
    a1: float = field(init=False)
    a2: float = field(init=False)
    case: Case = field(init=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ParamsOutsideA1(f"dimension must be an integer >= 2, got {self.dim}")
        a1, a2, case = split_roots(self.alpha, self.beta)
        if case is Case.ZERO_ALPHA and self.dim < 3:
            raise ParamsOutsideA1("alpha = 0 requires N >= 3 (assumption A1)")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "case", case)
        if self.p is not None:
            lo, hi = exponent_range(self.dim)
            p = float(self.p)
            if not (p > lo and (hi is None or p < hi)):
                upper = "inf" if hi is None else f"{float(hi):g}"
                raise ExponentOutOfRange(
                    f"p={p} outside ({float(lo):g}, {upper}) for N={self.dim} (assumption A2)"
                )
        g = self.gamma
        if not callable(g):
            g_arr = np.asarray(g, dtype=float)
            if not np.all(np.isfinite(g_arr)) or g_arr.size == 0 or g_arr.min() <= 0:
                raise ParamsOutsideA1("Gamma must be bounded with strictly positive infimum")

    @property
    def disc(self) -> float:
        """``sqrt(beta^2 - 4 alpha) = a1 - a2``."""
        return math.sqrt(self.beta * self.beta - 4.0 * self.alpha)

    @property
    def p_conj(self) -> float:
        if self.p is None:
            raise ValueError("exponent p is not set")
        return self.p / (self.p - 1.0)

    @property
    def shells(self) -> tuple[float, ...]:
        """Radii ``sqrt(a_j)`` of the singular spheres (positive roots only)."""
        return tuple(math.sqrt(a) for a in (self.a1, self.a2) if a > 0)

    def symbol(self, rho2):
        """``|xi|^4 + beta |xi|^2 + alpha`` at ``rho2 = |xi|^2``."""
        rho2 = np.asarray(rho2, dtype=float)
        return (rho2 + self.beta) * rho2 + self.alpha

    def describe(self) -> dict:
        out = {
            "alpha": self.alpha,
            "beta": self.beta,
            "N": self.dim,
            "p": self.p,
            "a1": self.a1,
            "a2": self.a2,
            "case": self.case.value,
        }
        g = self.gamma
        if callable(g):
            out["gamma"] = "callable"
        elif np.ndim(g) == 0:
            out["gamma"] = float(g)
        else:
            out["gamma"] = f"array{tuple(np.shape(g))}"
        return out


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere ``S^{N-1}``."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def _as_radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("radius must be positive")
    return r


def _finish(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def _half_integer_order(nu) -> int | None:
    n2 = 2.0 * nu
    if abs(n2 - round(n2)) < 1e-12 and int(round(n2)) % 2 == 1:
        return (int(round(n2)) - 1) // 2
    return None


def _hankel1_half(n: int, z):
    """``H^{(1)}_{n+1/2}(z)`` from the terminating spherical-Hankel sum."""
    z = np.asarray(z, dtype=complex)
    total = np.zeros_like(z)
    inv2z = 1.0 / (2.0 * z)
    power = np.ones_like(z)
    for k in range(n + 1):
        coef = math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k))
        total = total + coef * (1j**k) * power
        power = power * inv2z
    return np.sqrt(2.0 / (np.pi * z)) * (-1j) ** (n + 1) * np.exp(1j * z) * total


def _hankel1_c(nu: float, z):
    """Hankel function for complex argument in the closed upper half plane."""
    n = _half_integer_order(nu)
    if n is not None and n >= 0:
        return _hankel1_half(n, z)
    return special.hankel1(nu, np.asarray(z, dtype=complex))


def hankel1(nu: float, r):
    """Hankel function of the first kind ``H^{(1)}_nu(r)`` for ``r > 0``.

    Half-integer orders use the terminating closed form; integer orders defer
    to the AMOS routines in :mod:`scipy.special`.
    """
    r = _as_radius(r)
    return _finish(np.asarray(_hankel1_c(nu, r.astype(complex))))


def hankel1_asymptotic(nu: float, r, terms: int = 1):
    """Large-argument expansion of ``H^{(1)}_nu`` truncated after ``terms`` terms."""
    r = _as_radius(r)
    mu = 4.0 * nu * nu
    total = np.zeros_like(r, dtype=complex)
    coef = 1.0 + 0j
    for k in range(terms):
        total = total + coef / r**k
        coef = coef * (mu - (2 * k + 1) ** 2) * 1j / (8.0 * (k + 1))
    phase = r - (2.0 * nu + 1.0) * math.pi / 4.0
    return _finish(np.sqrt(2.0 / (np.pi * r)) * np.exp(1j * phase) * total)


def hankel1_small(dim: int, r):
    """Leading small-argument terms of ``H^{(1)}_{(N-2)/2}(r)``.

    For ``N = 2`` the constant ``1 + (2i/pi) gamma_E`` is kept with the
    logarithm: without it the relative error decays only like ``1/|ln r|``.
    """
    r = _as_radius(r)
    if dim == 2:
        return _finish(1.0 + (2j / np.pi) * (np.log(r / 2.0) + np.euler_gamma))
    nu = (dim - 2) / 2.0
    return _finish(-1j * math.gamma(nu) / np.pi * (2.0 / r) ** nu)


def _wavenumber(s):
    """Principal square root with nonnegative imaginary part."""
    k = np.sqrt(np.asarray(s, dtype=complex))
    return np.where(k.imag < 0, -k, k)


def green_and_derivative(s, r, dim: int):
    """``(g_s(r), g_s'(r))`` for the outgoing fundamental solution of ``-Delta - s``.

    ``s`` may be real of either sign or complex with ``Im s >= 0``.
    """
    r = np.asarray(r, dtype=float)
    nu = dim / 2.0 - 1.0
    area = sphere_area(dim)
    if np.isrealobj(s) and float(s) == 0.0:
        if dim == 2:
            raise UnsupportedCase("a = 0 has no decaying fundamental solution in N = 2")
        g = r ** (2 - dim) / ((dim - 2) * area)
        dg = -(r ** (1 - dim)) / area
        return g.astype(complex), dg.astype(complex)
    if np.isrealobj(s) and float(s) < 0.0:
        kap = math.sqrt(-float(s))
        x = kap * r
        scale = (2.0 * math.pi) ** (-dim / 2.0) * kap ** (2.0 * nu)
        decay = np.exp(-x)
        g = scale * x ** (-nu) * special.kve(nu, x) * decay
        dg = -scale * kap * x ** (-nu) * special.kve(nu + 1.0, x) * decay
        return g.astype(complex), dg.astype(complex)
    k = _wavenumber(s)
    z = k * r
    c = 0.25j * (2.0 * math.pi) ** (-nu)
    zpow = z ** (-nu)
    g = c * k ** (2.0 * nu) * zpow * _hankel1_c(nu, z)
    dg = -c * k ** (2.0 * nu + 1.0) * zpow * _hankel1_c(nu + 1.0, z)
    return g, dg


def helmholtz_green(a: float, r, dim: int):
    """Outgoing fundamental solution ``g_a(r)`` of ``-Delta - a`` in ``R^N``.

    ``a > 0``: ``(i/4) (2 pi r / sqrt(a))^{(2-N)/2} H^{(1)}_{(N-2)/2}(sqrt(a) r)``;
    ``a < 0``: ``(2 pi)^{-N/2} (sqrt|a|/r)^{(N-2)/2} K_{(N-2)/2}(sqrt|a| r)``;
    ``a = 0``: ``r^{2-N} / ((N-2) |S^{N-1}|)`` for ``N >= 3``.
    """
    r = _as_radius(r)
    return _finish(green_and_derivative(float(a), r, dim)[0])


def helmholtz_green_dr(a: float, r, dim: int):
    """Radial derivative ``g_a'(r)``."""
    r = _as_radius(r)
    return _finish(green_and_derivative(float(a), r, dim)[1])


def _green_mp(a: float, r: float, dim: int):
    nu = mpmath.mpf(dim) / 2 - 1
    r = mpmath.mpf(r)
    if a > 0:
        k = mpmath.sqrt(a)
        return 0.25j * (2 * mpmath.pi * r / k) ** (-nu) * mpmath.hankel1(nu, k * r)
    if a < 0:
        kap = mpmath.sqrt(-a)
        return (2 * mpmath.pi) ** (-mpmath.mpf(dim) / 2) * (kap / r) ** nu * mpmath.besselk(nu, kap * r)
    return r ** (2 - dim) / ((dim - 2) * (2 * mpmath.pi ** (mpmath.mpf(dim) / 2) / mpmath.gamma(mpmath.mpf(dim) / 2)))


def quartic_green(params: ProblemParams, r):
    """Outgoing fundamental solution ``G(r)`` of ``Delta^2 - beta Delta + alpha``.

    Near the origin the two Helmholtz terms cancel to leading order.  N = 3
    uses ``expm1``; N >= 4 switches to 40-digit arithmetic for
    ``r < 0.1/sqrt(a1)``.
    """
    r = _as_radius(r)
    n, a1, a2, disc = params.dim, params.a1, params.a2, params.disc
    if n == 3:
        k1 = _wavenumber(a1)
        k2 = _wavenumber(a2)
        out = (np.expm1(1j * k1 * r) - np.expm1(1j * k2 * r)) / (4.0 * math.pi * r * disc)
        return _finish(out)
    g1 = green_and_derivative(a1, r, n)[0]
    g2 = green_and_derivative(a2, r, n)[0]
    out = np.asarray((g1 - g2) / disc)
    if n >= 4:
        near = r < 0.1 / math.sqrt(a1)
        if np.any(near):
            with mpmath.workdps(40):
                vals = [
                    complex((_green_mp(a1, ri, n) - _green_mp(a2, ri, n)) / mpmath.mpf(disc))
                    for ri in np.atleast_1d(r)[np.atleast_1d(near)]
                ]
            flat = np.atleast_1d(out).astype(complex).copy()
            flat[np.atleast_1d(near)] = vals
            out = flat.reshape(out.shape)
    return _finish(out)


def quartic_green_origin(params: ProblemParams) -> complex:
    """``lim_{r -> 0} G(r)``; finite only for N in {2, 3}."""
    n, disc = params.dim, params.disc
    k1 = complex(_wavenumber(params.a1))
    k2 = complex(_wavenumber(params.a2))
    if n == 3:
        return complex(1j * (k1 - k2) / (4.0 * math.pi * disc))
    if n == 2:
        # log singularities of the two H_0 terms cancel; Euler's constant too
        return complex(-(np.log(k1) - np.log(k2)) / (2.0 * math.pi * disc))
    raise UnsupportedCase(f"G is singular at the origin for N = {n}")


def quartic_green_dr(params: ProblemParams, r):
    """Radial derivative ``G'(r)``."""
    r = _as_radius(r)
    n = params.dim
    d1 = green_and_derivative(params.a1, r, n)[1]
    d2 = green_and_derivative(params.a2, r, n)[1]
    return _finish((d1 - d2) / params.disc)


def quartic_green_samples(params: ProblemParams, r):
    """``G`` on an array of radii that may contain the origin (N in {2, 3})."""
    r = np.asarray(r, dtype=float)
    out = np.empty(r.shape, dtype=complex)
    zero = r == 0
    if np.any(zero):
        out[zero] = quartic_green_origin(params)
    if np.any(~zero):
        out[~zero] = quartic_green(params, r[~zero])
    return out


@lru_cache(maxsize=64)
def _root_tails(alpha: float, beta: float, a1: float, a2: float) -> tuple[float, float]:
    """Rounding errors ``exact_root - float_root`` of the two symbol roots."""
    with mpmath.workdps(40):
        d = mpmath.sqrt(mpmath.mpf(beta) ** 2 - 4 * mpmath.mpf(alpha))
        r1 = (-mpmath.mpf(beta) + d) / 2
        r2 = (-mpmath.mpf(beta) - d) / 2
        return float(r1 - a1), float(r2 - a2)


def partial_fraction_symbol(params: ProblemParams, rho2):
    """``(1/(|xi|^2 - a1) - 1/(|xi|^2 - a2)) / sqrt(beta^2 - 4 alpha)``.

    The roots are carried to double-double precision so the value keeps full
    relative accuracy next to the shells ``|xi|^2 = a_j``.
    """
    rho2 = np.asarray(rho2, dtype=float)
    t1, t2 = _root_tails(params.alpha, params.beta, params.a1, params.a2)
    d1 = (rho2 - params.a1) - t1
    d2 = (rho2 - params.a2) - t2
    return (1.0 / d1 - 1.0 / d2) / params.disc


# --- resonant / nonresonant split -------------------------------------------------


def smoothstep(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``, built from ``exp(-1/t)``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    out[mid] = special.expit(1.0 / (1.0 - tm) - 1.0 / tm)
    return _finish(out)


def shell_cutoff(radius: float, rho):
    """Single-shell cutoff: 1 for ``||xi|-k| <= k/6``, 0 for ``>= k/4``."""
    rho = np.asarray(rho, dtype=float)
    d = np.abs(rho - radius)
    return 1.0 - smoothstep((d - radius / 6.0) / (radius / 12.0))


def cutoff_annuli(params: ProblemParams) -> list[tuple[float, float]]:
    return [(0.75 * k, 1.25 * k) for k in params.shells]


def psi_hat(params: ProblemParams, rho):
    """Cutoff multiplier around the singular shell(s), values in [0, 1].

    Raises GridTooCoarse if the two annuli of the TwoHelmholtz case overlap.
    """
    ann = cutoff_annuli(params)
    if len(ann) == 2 and ann[1][1] > ann[0][0]:
        raise GridTooCoarse(
            f"cutoff annuli around sqrt(a1)={params.shells[0]:g} and sqrt(a2)={params.shells[1]:g} overlap"
        )
    out = np.zeros(np.shape(rho))
    for k in params.shells:
        out = np.maximum(out, shell_cutoff(k, rho))
    return _finish(out)


def _radial_prefactor(dim: int, r):
    return (2.0 * math.pi) ** (-dim / 2.0) * r ** (1.0 - dim / 2.0)


def resonant_profile(params: ProblemParams, r, rtol: float = 1e-12):
    """``G_1 = psi * G`` at radii ``r`` by one-dimensional Hankel quadrature.

    The shell singularity is handled as principal value (QAWC) plus the
    ``i pi delta`` contribution of the outgoing limit.
    """
    r = _as_radius(r)
    n = params.dim
    nu = n / 2.0 - 1.0
    a1, a2, disc = params.a1, params.a2, params.disc
    shells = params.shells
    psi_hat(params, 0.0)  # annulus overlap check
    out = np.empty(r.shape, dtype=complex)
    for idx, rv in np.ndenumerate(r):
        total = 0j
        for j, k in enumerate(shells):
            sign = 1.0 if j == 0 else -1.0
            other = a2 if j == 0 else a1

            # psi / sigma = psi / ((rho - k)(rho + k)(rho^2 - other)); the Cauchy weight supplies 1/(rho - k)
            def smooth(rho, k=k, other=other):
                return shell_cutoff(k, rho) / ((rho + k) * (rho * rho - other)) * special.jv(nu, rho * rv) * rho ** (n / 2.0)

            lo, hi = 0.75 * k, 1.25 * k
            val, err, info = integrate.quad(
                smooth, lo, hi, weight="cauchy", wvar=k, limit=400, epsabs=0.0, epsrel=rtol, full_output=1
            )[:3]
            if not math.isfinite(val) or abs(err) > 1e3 * rtol * max(abs(val), 1e-300) + 1e-14:
                raise QuadratureFailure(f"principal-value quadrature at r={rv:g}: error {err:g}")
            total += val
            # residue: pi i delta(rho^2 - a) = pi i delta(rho - k) / (2k)
            total += sign * 1j * math.pi / (2.0 * k) / disc * special.jv(nu, k * rv) * k ** (n / 2.0)
        out[idx] = _radial_prefactor(n, rv) * total
    return _finish(out)


def nonresonant_profile(params: ProblemParams, r, rtol: float = 1e-12):
    """``G_2 = G - G_1`` at radii ``r``."""
    r = _as_radius(r)
    return _finish(np.asarray(quartic_green(params, r)) - np.asarray(resonant_profile(params, r, rtol)))


@dataclass(frozen=True, eq=False)
class KernelSplit:
    """Grid samples of ``G = G_1 + G_2`` with the cutoff multiplier."""

    g1: "Field"
    g2: "Field"
    psi_hat: "Field"
    shell_radii: tuple[float, ...]


def kernel_split(params: ProblemParams, grid) -> KernelSplit:
    """Split grid samples of ``G`` into resonant and nonresonant parts.

    ``G_2`` is synthesised spectrally from the smooth multiplier
    ``(1 - psi_hat)/sigma``; ``G_1`` is the remainder, so ``g1 + g2``
    reproduces the samples of ``G`` up to addition round-off.
    """
    from .spectral import Field, inverse_ft

    k1 = math.sqrt(params.a1)
    if grid.nyquist <= 1.25 * k1:
        raise GridTooCoarse(f"Nyquist radius {grid.nyquist:g} must exceed 1.25*sqrt(a1) = {1.25 * k1:g}")
    rho = np.sqrt(grid.rho2())
    radii_all = np.unique(np.round(rho / grid.dxi * 2.0**20))
    for k in params.shells:
        band = (np.abs(radii_all * grid.dxi / 2.0**20 - k) > k / 6.0) & (
            np.abs(radii_all * grid.dxi / 2.0**20 - k) < k / 4.0
        )
        if np.count_nonzero(band) < 2:
            raise GridTooCoarse(f"cutoff transition band around {k:g} holds fewer than 2 lattice shells")
    psi = psi_hat(params, rho)
    clearance = grid.shell_clearance((params.a1, params.a2))
    if not clearance > 0:
        raise GridTooCoarse("frequency lattice meets a singular shell")
    sym = (1.0 - psi) / params.symbol(rho * rho)
    # multiplier -> kernel: divide by (2 pi)^{N/2}
    g2 = inverse_ft(Field(grid, sym * (2.0 * math.pi) ** (-grid.dim / 2.0), "frequency"))
    g_samples = quartic_green_samples(params, np.sqrt(grid.r2()))
    g1 = Field(grid, g_samples - g2.values, "physical")
    return KernelSplit(g1=g1, g2=g2, psi_hat=Field(grid, psi, "frequency"), shell_radii=params.shells)
