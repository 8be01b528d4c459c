"""Limiting-absorption resolvents on the periodic box.

Two boundary models are offered for ``(-Delta - a - i eps)^{-1}``:

``"free"`` (default)
    The Fourier multiplier is the exact transform of the outgoing kernel
    ``g_{a+i eps}`` multiplied by a radial cutoff ``chi`` (see
    :class:`Truncation`).  Periodic convolution with this compactly supported
    kernel equals the free-space convolution for sources and targets in the
    centred ball of radius ``Truncation.window_radius`` ("the window").
``"periodic"``
    The torus symbol ``1/(|xi|^2 - a - i eps)``.  Exact inverse of the
    operator on the box, but its ``eps -> 0`` limit produces standing waves,
    not outgoing ones.

For a sharp cutoff at radius ``r`` Green's second identity on the ball gives

    T_s(rho; r) = [1 + |S| r^{N-1} (g_s(r) rho Lambda_1(rho r) + g_s'(r) Lambda(rho r))] / (rho^2 - s)

with ``Lambda(t) = Gamma(N/2) (2/t)^nu J_nu(t)`` the spherical mean of a plane
wave, ``Lambda_1 = -Lambda'`` and ``nu = N/2 - 1``.  The numerator vanishes on
the shell, so ``T`` is entire in ``rho``.  A smooth cutoff is the average
``int (-chi'(r)) T_s(rho; r) dr``, evaluated by Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special

from .errors import ExtrapolationDiverged, GridTooCoarse
from .kernels import ProblemParams, green_and_derivative, quartic_green_samples, sphere_area
from .spectral import (
    PHYSICAL,
    Field,
    SpectralGrid,
    _require,
    forward_ft,
    inverse_ft,
    lp_norm,
    require_resolved,
)

BOUNDARIES = ("free", "periodic")


@dataclass(frozen=True)
class EpsSchedule:
    """Geometric absorption schedule (ratio 1/2) for Richardson extrapolation."""

    eps_values: tuple[float, ...]
    extrapolation_order: int = 3

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_values)
        if len(eps) < 2 or any(not e > 0 for e in eps):
            raise ValueError("need at least two positive eps values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps values must decrease")
        if not 1 <= self.extrapolation_order <= len(eps) - 1:
            raise ValueError("extrapolation order must lie in [1, levels-1]")
        object.__setattr__(self, "eps_values", eps)

    @classmethod
    def geometric(cls, eps0: float, levels: int = 6, order: int = 3) -> "EpsSchedule":
        return cls(tuple(eps0 * 0.5**k for k in range(levels)), min(order, levels - 1))

    @classmethod
    def for_grid(cls, grid: SpectralGrid, params: ProblemParams, levels: int = 6, order: int = 3,
                 eps0: float | None = None) -> "EpsSchedule":
        """Start at a quarter of the lattice's distance to the singular shells."""
        clearance = grid.shell_clearance((params.a1, params.a2))
        if not clearance > 0:
            raise GridTooCoarse("frequency lattice meets a singular shell; enable the offset")
        cap = 0.25 * clearance
        e0 = cap if eps0 is None else min(float(eps0), cap)
        # keep eps small against the phase accumulated over the kernel support
        e0 = min(e0, 0.05 * math.sqrt(params.a1) / grid.half_width)
        return cls.geometric(e0, levels, order)

    def describe(self) -> dict:
        return {"eps_values": list(self.eps_values), "extrapolation_order": self.extrapolation_order}


def richardson(values: list[np.ndarray], order: int, ratio: float = 0.5, floor: float = 1e-11):
    """Neville table in ``eps`` for integer-power error expansions.

    Returns ``(limit, error)``; ``error`` is the pointwise difference between
    the last two extrapolants of the top order.  Differences below
    ``floor`` times the limit's magnitude count as converged.
    """
    table = [np.asarray(v) for v in values]
    for j in range(1, order + 1):
        fac = ratio ** (-j)
        table = [table[k] + (table[k] - table[k - 1]) / (fac - 1.0) for k in range(1, len(table))]
    diffs = [float(np.max(np.abs(table[k] - table[k - 1]))) for k in range(1, len(table))]
    scale = float(np.max(np.abs(table[-1]))) if table[-1].size else 0.0
    noise = floor * max(scale, 1e-300)
    for d0, d1 in zip(diffs, diffs[1:]):
        if d1 > noise and d1 > 0.5 * d0:
            raise ExtrapolationDiverged(f"extrapolant differences {diffs} do not contract by 2")
    err = np.abs(table[-1] - table[-2]) if len(table) > 1 else np.zeros(table[-1].shape)
    return table[-1], err


@dataclass(frozen=True)
class Truncation:
    """Radial cutoff applied to the outgoing kernel.

    ``taper = 0`` cuts sharply at ``radius``.  Otherwise
    ``chi(r) = erfc((r - c)/s)/2`` with ``c +- 4 s`` spanning
    ``[(1 - taper) radius, radius]``; the residual jumps there are below 1e-8.
    A sharp cut makes ``L`` of the kernel carry derivative layers on the sphere,
    which ring across the whole grid; the taper removes them.
    """

    radius: float
    taper: float = 0.0
    nodes: int = 96

    @staticmethod
    def nodes_for(grid: SpectralGrid, width: float, minimum: int = 96) -> int:
        """Quadrature size resolving ``T_sharp(rho; r)`` in ``r`` up to the Nyquist radius.

        The integrand oscillates like ``e^{i rho r}``; Gauss-Legendre needs
        about half a node per radian of phase across the taper.
        """
        return max(minimum, int(math.ceil(0.5 * grid.nyquist * width)) + 40)

    def __post_init__(self):
        if not self.radius > 0 or not 0 <= self.taper < 1:
            raise ValueError("need radius > 0 and taper in [0, 1)")

    @classmethod
    def for_grid(cls, grid: SpectralGrid, taper: float = 0.0, nodes: int | None = None) -> "Truncation":
        """Largest support whose exactness window is centred and maximal.

        Exactness needs kernel-reach ``2W <= (1 - taper) R`` and no wrap,
        ``2L - 2W >= R``; equality in both gives ``R = 2L/(2 - taper)``.
        """
        radius = 2.0 * grid.half_width / (2.0 - taper)
        if nodes is None:
            nodes = cls.nodes_for(grid, taper * radius)
        return cls(radius, taper, nodes)

    @property
    def inner(self) -> float:
        return (1.0 - self.taper) * self.radius

    def window_radius(self, grid: SpectralGrid) -> float:
        return min(0.5 * self.inner, grid.half_width - 0.5 * self.radius)

    @cached_property
    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``r_i`` and weights of ``-chi'`` (summing to one)."""
        if self.taper == 0:
            return np.array([self.radius]), np.array([1.0])
        lo, hi = self.inner, self.radius
        c, s = 0.5 * (lo + hi), (hi - lo) / 8.0
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        r = c + 4.0 * s * x
        w = w * np.exp(-(((r - c) / s) ** 2))
        return r, w / w.sum()

    def profile(self, r):
        """``chi(r)``."""
        r = np.asarray(r, dtype=float)
        if self.taper == 0:
            return (r < self.radius).astype(float)
        lo, hi = self.inner, self.radius
        c, s = 0.5 * (lo + hi), (hi - lo) / 8.0
        out = 0.5 * special.erfc((r - c) / s)
        return np.where(r >= hi, 0.0, np.where(r <= lo, 1.0, out))

    def describe(self) -> dict:
        return {"radius": self.radius, "taper": self.taper, "nodes": self.nodes}


def _sphere_means(t, dim: int):
    """``(Lambda(t), Lambda_1(t))`` with ``Lambda_1 = -Lambda'``."""
    t = np.asarray(t, dtype=float)
    if dim == 3:
        return special.spherical_jn(0, t), special.spherical_jn(1, t)
    if dim == 2:
        return special.j0(t), special.j1(t)
    nu = dim / 2.0 - 1.0
    c = math.gamma(dim / 2.0) * 2.0**nu
    lam = np.ones_like(t)
    lam1 = np.zeros_like(t)
    nz = t > 0
    tn = t[nz]
    lam[nz] = c * tn ** (-nu) * special.jv(nu, tn)
    lam1[nz] = c * tn ** (-nu) * special.jv(nu + 1.0, tn)
    return lam, lam1


def multiplier_table(s_values, rho, dim: int, boundary: str = "free", trunc: Truncation | None = None,
                     chunk: int = 4096) -> np.ndarray:
    """Multipliers of ``(-Delta - s)^{-1}`` for several ``s``; shape ``(len(rho), len(s))``."""
    rho = np.asarray(rho, dtype=float)
    s_arr = np.asarray(s_values, dtype=complex)
    den = rho[:, None] ** 2 - s_arr[None, :]
    if boundary == "periodic":
        return 1.0 / den
    if boundary != "free":
        raise ValueError(f"unknown boundary model {boundary!r}")
    if trunc is None:
        raise ValueError("free boundary needs a truncation")
    r_nodes, w = trunc.quadrature
    G = np.empty((r_nodes.size, s_arr.size), dtype=complex)
    D = np.empty_like(G)
    for j, s in enumerate(s_values):
        s_eval = s if (np.iscomplexobj(s) and complex(s).imag != 0) else float(np.real(s))
        G[:, j], D[:, j] = green_and_derivative(s_eval, r_nodes, dim)
    scale = w * sphere_area(dim) * r_nodes ** (dim - 1)
    num = np.ones((rho.size, s_arr.size), dtype=complex)
    for lo in range(0, rho.size, chunk):
        sl = slice(lo, lo + chunk)
        t = rho[sl, None] * r_nodes[None, :]
        lam, lam1 = _sphere_means(t, dim)
        num[sl] += (rho[sl, None] * lam1 * scale) @ G + (lam * scale) @ D
    return num / den


def single_multiplier(s, rho, dim: int, boundary: str = "free", trunc: Truncation | None = None):
    """Multiplier of ``(-Delta - s)^{-1}`` at radii ``rho``."""
    return multiplier_table([s], np.atleast_1d(rho), dim, boundary, trunc)[:, 0].reshape(np.shape(rho))


def _lattice_radii(grid: SpectralGrid):
    keys = grid._freq_keys
    present = np.zeros(int(keys.max()) + 1, dtype=bool)
    present[keys.ravel()] = True
    uniq = np.flatnonzero(present)
    return uniq, np.sqrt(uniq.astype(float)) * 0.5 * grid.dxi, present.size


def padded_layout(grid: SpectralGrid, min_taper: float = 0.25, nodes: int | None = None):
    """Work grid and truncation making box-to-box convolution exact.

    Sources and targets both live in the box, so every separation is below
    the diameter ``d = 2 sqrt(N) L``.  The kernel is kept intact up to ``d``
    and the work period ``P`` satisfies ``P >= d + R``, so no periodic image
    reaches the box.  The work grid keeps the spacing ``h`` with the smallest
    power-of-two size admitting ``min_taper``; the leftover room widens the taper.
    """
    reach = 2.0 * math.sqrt(grid.dim) * grid.half_width
    need = reach + reach / (1.0 - min_taper)
    m = grid.points
    while m * grid.h < need:
        m *= 2
    work = SpectralGrid(grid.dim, 0.5 * m * grid.h, m, grid.offset)
    radius = m * grid.h - reach
    if nodes is None:
        nodes = Truncation.nodes_for(work, radius - reach)
    return work, Truncation(radius, 1.0 - reach / radius, nodes)


class QuarticResolvent:
    """Outgoing resolvent of ``Delta^2 - beta Delta + alpha`` on a grid.

    The multiplier is tabulated once on the distinct lattice radii.  For each
    root on the spectrum the ``eps``-regularised multiplier is evaluated over
    the schedule and Richardson-extrapolated; roots off the spectrum use
    ``eps = 0`` directly (the Schrodinger or Laplace resolvent).

    With ``pad=True`` the field is zero-extended to the work grid of
    :func:`padded_layout` and the result is exact on the whole box;
    otherwise it is exact on the ball of radius ``window * L``.
    """

    def __init__(self, params: ProblemParams, grid: SpectralGrid, sched: EpsSchedule | None = None,
                 boundary: str = "free", trunc: Truncation | None = None, pad: bool = False):
        if boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary model {boundary!r}")
        if pad and boundary != "free":
            raise ValueError("padding only applies to the free boundary model")
        self.params = params
        self.grid = grid
        self.pad = pad
        if pad:
            self.work_grid, default_trunc = padded_layout(grid)
        else:
            self.work_grid, default_trunc = grid, Truncation.for_grid(grid)
        self.sched = sched if sched is not None else EpsSchedule.for_grid(self.work_grid, params)
        self.boundary = boundary
        self.trunc = trunc if trunc is not None else default_trunc
        self._table = None
        self._err_table = None
        self._eps0_gap = None

    @property
    def window(self) -> float:
        """Window radius as a fraction of ``L``."""
        if self.boundary == "periodic" or self.pad:
            return 1.0
        return self.trunc.window_radius(self.grid) / self.grid.half_width

    def describe(self) -> dict:
        return {
            "boundary": self.boundary,
            "padded_points": self.work_grid.points if self.pad else None,
            "truncation": self.trunc.describe() if self.boundary == "free" else None,
            "window_fraction": self.window,
            "schedule": self.sched.describe(),
            "symbol_extrapolation_error": self.symbol_error,
            "eps0_limit_gap": self._eps0_gap,
        }

    def _build(self):
        uniq, rho, size = _lattice_radii(self.work_grid)
        p = self.params
        eps = self.sched.eps_values
        columns = []
        layout = []
        for a in (p.a1, p.a2):
            if a > 0:
                layout.append((len(columns), len(eps)))
                columns += [complex(a, e) for e in eps] + [complex(a)]
            else:
                layout.append((len(columns), 0))
                columns.append(float(a))
        tab = multiplier_table(columns, rho, self.grid.dim, self.boundary, self.trunc)
        parts = []
        errs = np.zeros(rho.shape)
        gap = 0.0
        for (start, n), a in zip(layout, (p.a1, p.a2)):
            if n:
                lim, err = richardson([tab[:, start + k] for k in range(n)], self.sched.extrapolation_order)
                gap = max(gap, float(np.max(np.abs(lim - tab[:, start + n]))))
                errs = errs + err
            else:
                lim = tab[:, start]
            parts.append(lim)
        table = np.zeros(size, dtype=complex)
        table[uniq] = (parts[0] - parts[1]) / p.disc
        err_table = np.zeros(size)
        err_table[uniq] = errs / p.disc
        self._table = table
        self._err_table = err_table
        self._eps0_gap = gap / p.disc

    @property
    def table(self) -> np.ndarray:
        if self._table is None:
            self._build()
        return self._table

    @property
    def symbol_error(self) -> float:
        if self._err_table is None:
            self._build()
        return float(self._err_table.max())

    def multiplier(self, real: bool = False) -> np.ndarray:
        """Multiplier on the work grid's lattice."""
        tab = self.table.real if real else self.table
        return tab[self.work_grid._freq_keys]

    @property
    def _box(self) -> tuple[slice, ...]:
        lo = (self.work_grid.points - self.grid.points) // 2
        return (slice(lo, lo + self.grid.points),) * self.grid.dim

    def embed(self, values: np.ndarray) -> np.ndarray:
        """Zero-extend box samples to the work grid."""
        if not self.pad:
            return np.asarray(values)
        out = np.zeros(self.work_grid.shape, dtype=np.asarray(values).dtype)
        out[self._box] = values
        return out

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Box samples of a work-grid array."""
        return np.asarray(values)[self._box] if self.pad else np.asarray(values)

    def _apply(self, f: Field, real: bool, extended: bool = False):
        _require(f, PHYSICAL)
        if f.grid != self.grid:
            raise ValueError("field lives on a different grid")
        F = forward_ft(Field(self.work_grid, self.embed(f.values)))
        tab = self.table.real if real else self.table
        keys = self.work_grid._freq_keys
        err2 = float(np.sum((self._err_table[keys] * np.abs(F.values)) ** 2))
        err_est = math.sqrt(err2 * self.work_grid.dxi**self.grid.dim)
        F.values[...] *= tab[keys]
        vals = inverse_ft(F).values
        if real:
            vals = vals.real.copy()
        if extended:
            return Field(self.work_grid, vals, PHYSICAL), err_est
        return Field(self.grid, self.restrict(vals).copy(), PHYSICAL), err_est

    def apply(self, f: Field, full_output: bool = False, extended: bool = False):
        """``R f`` (complex).

        ``full_output`` adds an L2 extrapolation-error estimate; ``extended``
        returns the result on the whole work grid (padded mode only differs).
        """
        out, err = self._apply(f, False, extended)
        return (out, err) if full_output else out

    def apply_real(self, f: Field, full_output: bool = False, extended: bool = False):
        """``Re R f`` for real ``f`` via the real part of the multiplier."""
        if np.iscomplexobj(f.values) and np.any(f.values.imag != 0):
            raise ValueError("real resolvent expects a real field")
        out, err = self._apply(f, True, extended)
        return (out, err) if full_output else out


def apply_resolvent_eps(a: float, eps: float, f: Field, boundary: str = "free",
                        trunc: Truncation | None = None) -> Field:
    """``(-Delta - a - i eps)^{-1} f``; ``eps = 0`` is allowed when the lattice avoids the shell."""
    _require(f, PHYSICAL)
    g = f.grid
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    s = complex(a, eps) if eps > 0 else float(a)
    trunc = trunc if trunc is not None else Truncation.for_grid(g)
    tab = g.radial_eval(lambda rho: single_multiplier(s, rho, g.dim, boundary, trunc), dtype=complex)
    F = forward_ft(f)
    F.values[...] *= tab
    return inverse_ft(F)


def apply_quartic_resolvent(params: ProblemParams, f: Field, sched: EpsSchedule | None = None,
                            boundary: str = "free", full_output: bool = False, trunc: Truncation | None = None):
    """Outgoing fourth-order resolvent ``(R_{a1} - R_{a2}) f / sqrt(beta^2 - 4 alpha)``."""
    op = QuarticResolvent(params, f.grid, sched, boundary, trunc)
    return op.apply(f, full_output)


def apply_real_resolvent(params: ProblemParams, f: Field, sched: EpsSchedule | None = None,
                         boundary: str = "free", full_output: bool = False, trunc: Truncation | None = None):
    """Real part of :func:`apply_quartic_resolvent` for real ``f``."""
    op = QuarticResolvent(params, f.grid, sched, boundary, trunc)
    return op.apply_real(f, full_output)


def check_symmetry(params: ProblemParams, f: Field, g: Field, sched: EpsSchedule | None = None,
                   boundary: str = "free", op: QuarticResolvent | None = None) -> float:
    """``|<Rf, g> - <f, Rg>| / (||f||_2 ||g||_2)`` for real fields."""
    op = op or QuarticResolvent(params, f.grid, sched, boundary)
    Rf = op.apply_real(f)
    Rg = op.apply_real(g)
    cell = f.grid.cell_volume
    lhs = float(np.sum(Rf.values * g.values)) * cell
    rhs = float(np.sum(f.values * Rg.values)) * cell
    den = lp_norm(f, 2) * lp_norm(g, 2)
    return abs(lhs - rhs) / den if den > 0 else 0.0


def dilate_grid(grid: SpectralGrid, factor: float) -> SpectralGrid:
    return SpectralGrid(grid.dim, grid.half_width * factor, grid.points, grid.offset)


def check_scaling(a: float, f: Field, eps: float = 0.0, boundary: str = "free") -> float:
    """Relative defect of ``(R_a f)(x) = a^{-1} R_1(f(./sqrt a))(sqrt a x)``.

    The dilated field lives on the grid of half width ``sqrt(a) L`` with the
    same node count, so its samples coincide with those of ``f``; ``eps`` is
    scaled by ``a`` on the right-hand side.
    """
    if not a > 0:
        raise ValueError("scaling identity needs a > 0")
    require_resolved(f)
    sa = math.sqrt(a)
    lhs = apply_resolvent_eps(a, eps, f, boundary)
    g2 = dilate_grid(f.grid, sa)
    f2 = Field(g2, f.values, PHYSICAL)
    rhs = apply_resolvent_eps(1.0, eps / a, f2, boundary).values / a
    den = np.linalg.norm(lhs.values)
    return float(np.linalg.norm(lhs.values - rhs) / den) if den > 0 else 0.0


def operator_symbol(params: ProblemParams, grid: SpectralGrid) -> np.ndarray:
    """``|xi|^4 + beta |xi|^2 + alpha`` on the lattice."""
    return params.symbol(grid.rho2())


def apply_operator(params: ProblemParams, u: Field) -> Field:
    """``L u`` computed spectrally."""
    F = forward_ft(u)
    F.values[...] *= operator_symbol(params, u.grid)
    out = inverse_ft(F)
    if np.isrealobj(u.values):
        out = out.like(out.values.real.copy())
    return out


def pde_residual(u: Field, f: Field, params: ProblemParams, window: float | None = None) -> float:
    """``||L u - f||_2 / ||f||_2``, optionally over the ball of radius ``window * L``."""
    if u.grid != f.grid:
        raise ValueError("u and f must share a grid")
    Lu = apply_operator(params, u)
    mask = None if window is None else u.grid.ball(window)
    num = lp_norm(Lu.like(Lu.values - f.values), 2, mask)
    den = lp_norm(f, 2, mask)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def windowed_error(u: Field, ref: np.ndarray, window: float = 0.5, exclude: float = 0.0) -> float:
    """Relative L2 distance of ``u`` to reference samples over an annular window."""
    g = u.grid
    mask = g.ball(window)
    if exclude > 0:
        mask &= g.r2() > exclude**2
    diff = np.asarray(u.values)[mask] - np.asarray(ref)[mask]
    den = np.linalg.norm(np.asarray(ref)[mask])
    return float(np.linalg.norm(diff) / den)


def kernel_convolution(params: ProblemParams, f: Field, pad: int = 2, real: bool = True) -> Field:
    """Convolution with analytically sampled ``G`` via a zero-padded FFT (N in {2, 3}).

    Independent of the multiplier route: the kernel is sampled on a box of
    ``pad`` times the size, truncated to the ball of radius ``pad * L``.
    ``pad = 2`` gives the aperiodic convolution on the whole box; ``pad = 1``
    is exact only for targets and sources inside the half-radius ball.
    """
    g = f.grid
    if pad not in (1, 2):
        raise ValueError("pad must be 1 or 2")
    big = SpectralGrid(g.dim, pad * g.half_width, pad * g.points, offset=False)
    kern = big.radial_eval(lambda r: quartic_green_samples(params, r), PHYSICAL, dtype=complex)
    kern[big.r2() >= big.half_width**2] = 0.0
    if real:
        kern = kern.real.copy()
    src = np.zeros(big.shape, dtype=f.values.dtype)
    lo = (pad - 1) * g.points // 2
    sl = tuple(slice(lo, lo + g.points) for _ in range(g.dim))
    src[sl] = f.values
    # kernel centred at index M_big/2: shift to the origin for circular convolution
    kern = np.fft.ifftshift(kern)
    import scipy.fft

    if real and np.isrealobj(src):
        conv = scipy.fft.irfftn(scipy.fft.rfftn(src) * scipy.fft.rfftn(kern), s=big.shape)
    else:
        conv = scipy.fft.ifftn(scipy.fft.fftn(src) * scipy.fft.fftn(kern))
    conv *= g.cell_volume
    return Field(g, conv[sl].copy(), PHYSICAL)
