"""Farfield amplitudes, radiation and decay diagnostics, and estimate probes.

Fourier transforms at off-lattice points are exact nonuniform sums over the
physical samples with the midpoint weights of :func:`forward_ft`, so on
lattice points they reproduce the FFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, interpolate, special

from .errors import CaseMismatch, ExponentOutOfRange, InsufficientShells, NyquistViolation
from .kernels import Case, ProblemParams, quartic_green, sphere_area
from .resolvent import QuarticResolvent
from .spectral import PHYSICAL, Field, SpectralGrid, _require, forward_ft, inverse_ft, lp_norm

DEFAULT_DIRECTIONS = {2: 256, 3: (32, 64)}


# ----------------------------------------------------------------------------- directions
@dataclass(frozen=True)
class SphereQuadrature:
    """Unit directions with surface weights.

    ``N = 2``: ``n`` equiangular points.  ``N = 3``: Gauss-Legendre in
    ``cos(theta)`` times a uniform azimuth.
    """

    dim: int
    directions: np.ndarray
    weights: np.ndarray
    shape: tuple

    @classmethod
    def build(cls, dim: int, count=None, rotation: float = 0.0) -> "SphereQuadrature":
        count = DEFAULT_DIRECTIONS[dim] if count is None else count
        if dim == 2:
            n = int(count)
            th = rotation + 2.0 * np.pi * np.arange(n) / n
            dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
            return cls(2, dirs, np.full(n, 2.0 * np.pi / n), (n,))
        if dim == 3:
            nt, nphi = count
            ct, wt = np.polynomial.legendre.leggauss(nt)
            phi = rotation + 2.0 * np.pi * np.arange(nphi) / nphi
            st = np.sqrt(1.0 - ct**2)
            dirs = np.stack(
                [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(ct, np.ones(nphi))], axis=-1
            ).reshape(-1, 3)
            w = np.outer(wt, np.full(nphi, 2.0 * np.pi / nphi)).ravel()
            return cls(3, dirs, w, (nt, nphi))
        raise ValueError(f"sphere quadrature implemented for N in {{2, 3}}, got {dim}")


def sphere_restriction(f: Field, radius: float, directions, chunk: int = 64) -> np.ndarray:
    """``f_hat(radius * omega)`` for each unit vector ``omega`` (rows of ``directions``).

    Raises
    ------
    NyquistViolation
        ``radius`` at or beyond the grid Nyquist radius.
    """
    _require(f, PHYSICAL)
    g = f.grid
    if not radius < g.nyquist:
        raise NyquistViolation(f"radius {radius:g} not below Nyquist radius {g.nyquist:g}")
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if dirs.shape[1] != g.dim:
        raise ValueError("directions must have one column per dimension")
    vals = np.asarray(f.values, dtype=complex)
    x = g.x
    scale = g.cell_volume / (2.0 * np.pi) ** (g.dim / 2.0)
    out = np.empty(len(dirs), dtype=complex)
    for s in range(0, len(dirs), chunk):
        xi = radius * dirs[s : s + chunk]
        E = [np.exp(-1j * np.outer(xi[:, d], x)) for d in range(g.dim)]
        # contract one axis at a time: (n, M) x (M, ...) keeping the direction index
        acc = np.einsum("nj,j...->n...", E[0], vals)
        for d in range(1, g.dim):
            acc = np.einsum("nj,nj...->n...", E[d], acc)
        out[s : s + chunk] = acc * scale
    return out


# ----------------------------------------------------------------------------- farfield
@dataclass
class FarfieldAmplitude:
    """Coefficients of the farfield pattern ``U_f``.

    ``U_f(x) = sum_j s_j A_j(omega) e^{i(k_j |x| - phase)} / |x|^{(N-1)/2} - monopole / |x|``
    with ``s_1 = +1``, ``s_2 = -1`` and ``A_j = amps[j]``.
    """

    dim: int
    quadrature: SphereQuadrature
    amp1: np.ndarray
    k1: float
    amp2: np.ndarray | None = None
    k2: float | None = None
    monopole: float | None = None

    @property
    def directions(self) -> np.ndarray:
        return self.quadrature.directions

    @property
    def phase(self) -> float:
        return (self.dim - 3) * np.pi / 4.0

    def _interp(self, amp: np.ndarray, unit: np.ndarray) -> np.ndarray:
        q = self.quadrature
        if self.dim == 2:
            # trigonometric interpolation from the equiangular raster
            n = q.shape[0]
            th0 = math.atan2(q.directions[0, 1], q.directions[0, 0])
            coef = np.fft.fft(amp) / n
            m = np.fft.fftfreq(n, d=1.0 / n)
            if n % 2 == 0:
                coef[n // 2] *= 0.5
                coef = np.append(coef, coef[n // 2])
                m = np.append(m, n // 2)
                m[n // 2] = -n // 2
            th = np.arctan2(unit[:, 1], unit[:, 0]) - th0
            out = np.zeros(len(unit), dtype=complex)
            for c, mm in zip(coef, m):
                out += c * np.exp(1j * mm * th)
            return out
        nt, nphi = q.shape
        ct = q.directions.reshape(nt, nphi, 3)[:, 0, 2]
        phi0 = math.atan2(q.directions[0, 1], q.directions[0, 0])
        phi = phi0 + 2.0 * np.pi * np.arange(nphi + 1) / nphi
        tab = amp.reshape(nt, nphi)
        tab = np.concatenate([tab, tab[:, :1]], axis=1)
        pts_c = np.clip(unit[:, 2], ct[0], ct[-1])
        pts_p = phi0 + np.mod(np.arctan2(unit[:, 1], unit[:, 0]) - phi0, 2.0 * np.pi)
        out = np.empty(len(unit), dtype=complex)
        for part in ("real", "imag"):
            spline = interpolate.RectBivariateSpline(ct, phi, getattr(tab, part), kx=3, ky=3)
            val = spline.ev(pts_c, pts_p)
            if part == "real":
                out.real = val
            else:
                out.imag = val
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """``U_f`` at the rows of ``points`` (nonzero vectors)."""
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts, axis=1)
        unit = pts / r[:, None]
        decay = r ** (-(self.dim - 1) / 2.0)
        out = self._interp(self.amp1, unit) * np.exp(1j * (self.k1 * r - self.phase)) * decay
        if self.amp2 is not None:
            out -= self._interp(self.amp2, unit) * np.exp(1j * (self.k2 * r - self.phase)) * decay
        if self.monopole is not None:
            out -= self.monopole / r
        return out

    def synthesize(self, grid: SpectralGrid, inner: float = 2.0) -> Field:
        """``Re U_f`` on the grid for ``|x| >= inner`` (zero in the core)."""
        mask = grid.r2() >= inner * inner
        pts = np.stack([np.broadcast_to(c, grid.shape)[mask] for c in grid.coords()], axis=1)
        vals = np.zeros(grid.shape)
        vals[mask] = self.evaluate(pts).real
        return Field(grid, vals, PHYSICAL)


def _prefactor(params: ProblemParams, a: float) -> float:
    return a ** ((params.dim - 3) / 4.0) / params.disc * math.sqrt(math.pi / 2.0)


def farfield_amplitude(f: Field, params: ProblemParams, directions: SphereQuadrature | None = None
                       ) -> FarfieldAmplitude:
    """Farfield amplitudes of ``Re G * f``.

    Raises
    ------
    CaseMismatch
        Field dimension differs from ``params.dim``.
    """
    if f.grid.dim != params.dim:
        raise CaseMismatch(f"field is {f.grid.dim}-dimensional, parameters are for N={params.dim}")
    q = directions if directions is not None else SphereQuadrature.build(params.dim)
    k1 = math.sqrt(params.a1)
    amp1 = _prefactor(params, params.a1) * sphere_restriction(f, k1, q.directions)
    out = FarfieldAmplitude(params.dim, q, amp1, k1)
    if params.case is Case.TWO_HELMHOLTZ:
        out.k2 = math.sqrt(params.a2)
        out.amp2 = _prefactor(params, params.a2) * sphere_restriction(f, out.k2, q.directions)
    elif params.case is Case.ZERO_ALPHA and params.dim == 3:
        total = float(np.sum(np.real(f.values))) * f.grid.cell_volume
        out.monopole = total / (4.0 * np.pi * abs(params.beta))
    return out


def _ball_means(grid: SpectralGrid, density: np.ndarray, R_values, inner: float = 0.0) -> np.ndarray:
    """``(1/R) int_{inner <= |x| < R} density`` per ``R``."""
    r2 = grid.r2()
    out = []
    for R in R_values:
        if R > grid.half_width:
            raise ValueError(f"R={R:g} exceeds the box half width {grid.half_width:g}")
        mask = (r2 < R * R) & (r2 >= inner * inner)
        out.append(float(np.sum(density[mask])) * grid.cell_volume / R)
    return np.array(out)


def farfield_error(u: Field, f: Field, params: ProblemParams, R_values, inner: float = 2.0,
                   directions: SphereQuadrature | None = None) -> np.ndarray:
    """``(1/R) int_{B_R} |u - Re U_f|^2`` per ``R`` with the core ``|x| < inner`` excluded."""
    amp = farfield_amplitude(f, params, directions)
    ref = amp.synthesize(u.grid, inner)
    diff = np.real(u.values) - ref.values
    return _ball_means(u.grid, diff * diff, R_values, inner)


# ----------------------------------------------------------------------------- radiation
def spectral_gradient(u: Field) -> list[np.ndarray]:
    """Components of ``grad u`` by Fourier differentiation."""
    F = forward_ft(u)
    out = []
    for xi in u.grid.freqs():
        out.append(inverse_ft(F.like(F.values * (1j * xi))).values)
    return out


def _radiation_density(u: Field, k: float) -> np.ndarray:
    g = u.grid
    grads = spectral_gradient(u)
    r = g.radius()
    safe = np.where(r > 0, r, 1.0)
    dens = np.zeros(g.shape)
    for gd, x in zip(grads, g.coords()):
        comp = gd - 1j * k * u.values * np.where(r > 0, x / safe, 0.0)
        dens += np.abs(comp) ** 2
    return dens


def radiation_residual(u_complex, params: ProblemParams, R_values, inner: float = 0.0):
    """``(1/R) int_{B_R} |grad u - i k u x/|x||^2`` with ``k = sqrt(a1)``.

    For two positive roots pass the pair ``(u1, u2)`` of single-shell fields
    ``g_{a_j} * f``; the result is then a pair of residual arrays.

    Raises
    ------
    CaseMismatch
        A single field in the two-shell case or a pair otherwise.
    """
    pair = isinstance(u_complex, (tuple, list))
    if params.case is Case.TWO_HELMHOLTZ:
        if not pair or len(u_complex) != 2:
            raise CaseMismatch("two positive roots: supply the component fields (u1, u2)")
        return tuple(
            _ball_means(uj.grid, _radiation_density(uj, math.sqrt(a)), R_values, inner)
            for uj, a in zip(u_complex, (params.a1, params.a2))
        )
    if pair:
        raise CaseMismatch(f"case {params.case.value} has a single oscillatory shell")
    return _ball_means(u_complex.grid, _radiation_density(u_complex, math.sqrt(params.a1)), R_values, inner)


def component_fields(params: ProblemParams, f: Field, boundary: str = "free", trunc=None):
    """Single-shell outgoing fields ``g_{a_j} * f`` for two positive roots."""
    from .resolvent import apply_resolvent_eps

    if params.case is not Case.TWO_HELMHOLTZ:
        raise CaseMismatch("component split needs two positive roots")
    return tuple(apply_resolvent_eps(a, 0.0, f, boundary, trunc) for a in (params.a1, params.a2))


# ----------------------------------------------------------------------------- decay
@dataclass
class DecayFit:
    slope: float
    stderr: float
    radii: np.ndarray
    maxima: np.ndarray
    super_polynomial: bool = False

    def describe(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "shells": len(self.radii),
                "super_polynomial": self.super_polynomial}


def decay_fit(u: Field, r_range: tuple[float, float], ratio: float = math.sqrt(2.0), min_shells: int = 4
              ) -> DecayFit:
    """Slope of ``log max_shell |u|`` against ``log r`` over geometric shells.

    Shells are ``[r0 ratio^k, r0 ratio^{k+1})`` inside ``r_range``; each
    contributes its geometric-mean radius.  ``super_polynomial`` flags local
    slopes that keep steepening past -3, as for exponential decay.

    Raises
    ------
    InsufficientShells
        Fewer than ``min_shells`` non-empty shells.
    """
    lo, hi = r_range
    if not 0 < lo < hi:
        raise ValueError("need 0 < r_min < r_max")
    r = u.grid.radius()
    a = np.abs(np.asarray(u.values))
    edges = [lo]
    while edges[-1] * ratio <= hi * (1 + 1e-12):
        edges.append(edges[-1] * ratio)
    radii, maxima = [], []
    for e0, e1 in zip(edges[:-1], edges[1:]):
        m = (r >= e0) & (r < e1)
        if np.any(m) and a[m].max() > 0:
            radii.append(math.sqrt(e0 * e1))
            maxima.append(a[m].max())
    if len(radii) < min_shells:
        raise InsufficientShells(f"{len(radii)} shells in [{lo:g}, {hi:g}], need {min_shells}")
    x = np.log(radii)
    y = np.log(maxima)
    (slope, icpt), res, *_ = np.linalg.lstsq(np.stack([x, np.ones_like(x)], 1), y, rcond=None)
    n = len(x)
    resid = y - (slope * x + icpt)
    s2 = float(resid @ resid) / max(n - 2, 1)
    stderr = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    local = np.diff(y) / np.diff(x)
    steepening = bool(np.all(np.diff(local) < 0)) and local[-1] < -3.0
    return DecayFit(float(slope), stderr, np.array(radii), np.array(maxima), steepening)


# ----------------------------------------------------------------------------- estimate region
def _inv(x) -> Fraction:
    """``1/x`` as a Fraction; ``inf`` maps to 0."""
    if x == math.inf:
        return Fraction(0)
    return 1 / Fraction(x)


def in_estimate_region(dim: int, p, q) -> bool:
    """Exact membership of ``(1/p, 1/q)`` in the ``L^p -> L^q`` region of the resolvent.

    ``p`` and ``q`` are rationals (ints, Fractions or decimal strings) or ``math.inf``.
    """
    ip, iq = _inv(p), _inv(q)
    gap = ip - iq
    if not gap >= Fraction(2, dim + 1):
        return False
    if dim in (2, 3):
        upper = gap <= 1
    elif dim == 4:
        upper = gap < 1
    else:
        upper = gap <= Fraction(4, dim)
    return upper and ip > Fraction(dim + 1, 2 * dim) and iq < Fraction(dim - 1, 2 * dim)


def dual_exponent_range(dim: int) -> tuple[Fraction, Fraction | None, bool]:
    """Range of ``q`` with ``(q', q)`` in the region: ``(low, high, high_included)``.

    ``high = None`` means unbounded above; then ``high_included`` says
    whether ``q = inf`` itself belongs.
    """
    low = Fraction(2 * (dim + 1), dim - 1)
    if dim in (2, 3):
        return low, None, True
    if dim == 4:
        return Fraction(10, 3), None, False
    return low, Fraction(2 * dim, dim - 4), True


@dataclass
class FamilySpec:
    """Seeded family of band-limited bumps on ``grid``."""

    grid: SpectralGrid
    count: int = 20
    scale_range: tuple[float, float] = (0.6, 1.6)
    center_spread: float = 1.0
    max_modulation: float = 2.0

    def fields(self, seed: int) -> list[Field]:
        rng = np.random.default_rng(seed)
        xs = self.grid.coords()
        out = []
        for _ in range(self.count):
            c = rng.normal(scale=self.center_spread, size=self.grid.dim)
            s = rng.uniform(*self.scale_range)
            k = rng.normal(size=self.grid.dim)
            k *= rng.uniform(0, self.max_modulation) / max(np.linalg.norm(k), 1e-12)
            env = np.exp(-sum((x - ci) ** 2 for x, ci in zip(xs, c)) / (2 * s * s))
            phase = sum(ki * (x - ci) for ki, x, ci in zip(k, xs, c))
            out.append(Field(self.grid, env * np.cos(phase), PHYSICAL))
        return out


def norm_probe(params: ProblemParams, p, q, family_spec: FamilySpec, seed: int = 0,
               windows: tuple[float, float] = (0.5, 1.0)) -> dict:
    """Ratios ``||R f||_{L^q(B)} / ||f||_p`` over a seeded family at two ball radii.

    The resolvent is applied in padded mode so it is exact on the whole box;
    ``windows`` are ball radii as fractions of ``L``.  This cannot certify an
    operator norm; it reports whether the largest ratio is stable (< 25 %
    change) when the ball radius doubles.
    """
    grid = family_spec.grid
    res = QuarticResolvent(params, grid, pad=True)
    pf = math.inf if p == math.inf else float(p)
    qf = math.inf if q == math.inf else float(q)
    ratios = np.empty((family_spec.count, len(windows)))
    for i, f in enumerate(family_spec.fields(seed)):
        u = res.apply(f)
        nf = lp_norm(f, pf)
        for j, w in enumerate(windows):
            ratios[i, j] = lp_norm(u, qf, grid.ball(w)) / nf
    mx = ratios.max(axis=0)
    change = abs(mx[-1] - mx[0]) / mx[0]
    return {
        "p": pf, "q": qf, "N": params.dim, "seed": seed, "count": family_spec.count,
        "in_region": in_estimate_region(params.dim, p, q),
        "windows": list(windows),
        "max_ratio": mx.tolist(), "mean_ratio": ratios.mean(axis=0).tolist(),
        "relative_change": float(change), "stable": bool(change < 0.25),
        "note": "stability under window doubling; not a certified operator norm",
    }


# ----------------------------------------------------------------------------- tail integrability
def tail_integrability(params: ProblemParams, r_exponent: float, radii=None, band: float = 0.1) -> dict:
    """Growth of ``int_{1 < |x| < R} |G|^r`` and the integrability verdict.

    The integral is accumulated over the consecutive ``radii`` (default
    dyadic ``2^0 .. 2^12``) by adaptive quadrature of the closed-form
    kernel.  The exponent ``e`` of the per-shell increments ``~ R^e`` is fitted
    over the last five shells: ``e < -band`` is convergent, ``|e| <= band``
    logarithmic (divergent) and ``e > band`` power divergence.
    """
    radii = np.asarray(radii if radii is not None else 2.0 ** np.arange(13), dtype=float)
    if radii[0] < 1 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be increasing and >= 1")
    N = params.dim
    r = float(r_exponent)
    area = sphere_area(N)

    def integrand(s):
        return abs(complex(quartic_green(params, s))) ** r * s ** (N - 1)

    shells = []
    lo = 1.0
    for hi in radii:
        if hi <= lo:
            shells.append(0.0)
            continue
        pieces = max(4, int(math.ceil((hi - lo) / 8.0)))
        edges = np.linspace(lo, hi, pieces + 1)
        tot = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(integrand, a, b, limit=200, epsrel=1e-10)
            tot += val
        shells.append(area * tot)
        lo = hi
    shells = np.array(shells)
    cumulative = np.cumsum(shells)
    # int_lo^hi s^{e-1} ds ~ hi^e log(hi/lo) for a thin log-shell: normalise by the log-width
    widths = np.log(radii / np.concatenate([[1.0], radii[:-1]]))
    k = min(5, len(radii) - 1)
    x = np.log(radii[-k:])
    y = np.log(shells[-k:] / widths[-k:])
    growth = float(np.polyfit(x, y, 1)[0])
    if growth < -band:
        verdict = "convergent"
    elif growth <= band:
        verdict = "divergent-logarithmic"
    else:
        verdict = "divergent"
    analytic = N - r * (N - 1) / 2.0
    return {
        "N": N, "r": r, "radii": radii.tolist(), "integrals": cumulative.tolist(),
        "growth_rate": growth, "analytic_exponent": analytic, "verdict": verdict,
        "convergent": verdict == "convergent",
    }


# ----------------------------------------------------------------------------- restriction probes
def _restriction_limit(dim: int) -> Fraction:
    return Fraction(2 * (dim + 1), dim + 3)


def stein_tomas_probe(g, radii, p: float, seed: int = 0, directions=None) -> dict:
    """``(int_S |g_hat(r omega)|^2)^{1/2} / (r^{-N(1 - 1/p)} ||g||_p)`` per radius.

    ``g`` is a field or a sequence of fields; the seed rotates the sphere
    quadrature so grid-aligned directions are not favoured.

    Raises
    ------
    ExponentOutOfRange
        ``p`` outside ``[1, 2(N+1)/(N+3)]``.
    NyquistViolation
        A radius at or beyond the Nyquist radius.
    """
    fields = [g] if isinstance(g, Field) else list(g)
    dim = fields[0].grid.dim
    if not 1 <= Fraction(p) <= _restriction_limit(dim):
        raise ExponentOutOfRange(f"p={p} outside [1, {float(_restriction_limit(dim)):g}] for N={dim}")
    rot = np.random.default_rng(seed).uniform(0, 2 * np.pi)
    q = SphereQuadrature.build(dim, directions, rotation=rot)
    radii = np.asarray(radii, dtype=float)
    ratios = np.empty((len(fields), len(radii)))
    for i, f in enumerate(fields):
        nf = lp_norm(f, float(p))
        for j, r in enumerate(radii):
            vals = sphere_restriction(f, r, q.directions)
            lhs = math.sqrt(float(np.sum(q.weights * np.abs(vals) ** 2)))
            ratios[i, j] = lhs / (r ** (-dim * (1.0 - 1.0 / float(p))) * nf)
    return {"p": float(p), "N": dim, "seed": seed, "radii": radii.tolist(), "ratios": ratios.tolist(),
            "max_ratio": float(ratios.max()), "finite": bool(np.all(np.isfinite(ratios)))}


def radial_transform(profile, rho: float, dim: int, rmax: float) -> float:
    """Unitary Fourier transform of a radial function at ``|xi| = rho``.

    ``f_hat(rho) = rho^{1 - N/2} int_0^rmax f(s) J_{N/2-1}(rho s) s^{N/2} ds``.
    """
    nu = dim / 2.0 - 1.0
    val, _ = integrate.quad(lambda s: profile(s) * special.jv(nu, rho * s) * s ** (dim / 2.0), 0.0, rmax,
                            limit=400, epsabs=1e-13, epsrel=1e-11)
    return rho ** (-nu) * val


def radial_lp_norm(profile, r_exponent: float, dim: int, rmax: float) -> float:
    val, _ = integrate.quad(lambda s: abs(profile(s)) ** r_exponent * s ** (dim - 1), 0.0, rmax,
                            limit=400, epsabs=1e-14, epsrel=1e-11)
    return (sphere_area(dim) * val) ** (1.0 / r_exponent)


def radial_restriction_probe(profile, r_exponent: float, dim: int, rmax: float, radii=(1.0,)) -> float:
    """``max_rho |f_hat(rho)| / ||f||_r`` for a radial profile supported in ``[0, rmax]``.

    Raises
    ------
    ExponentOutOfRange
        ``r_exponent`` outside ``[1, 2N/(N+1))``.
    """
    if not (1 <= Fraction(r_exponent) < Fraction(2 * dim, dim + 1)):
        raise ExponentOutOfRange(f"r={r_exponent} outside [1, {2 * dim / (dim + 1):g}) for N={dim}")
    top = max(abs(radial_transform(profile, float(rho), dim, rmax)) for rho in radii)
    return top / radial_lp_norm(profile, float(r_exponent), dim, rmax)
