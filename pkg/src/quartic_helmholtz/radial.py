"""Radial reduction: shooting from the origin and the radial resolvent.

For ``u = u(r)`` the equation becomes the pair

    u'' + (N-1)/r u' = w,
    w'' + (N-1)/r w' = beta w - alpha u + Gamma(r) |u|^{p-2} u,

with regular data ``u(0) = u0``, ``u''(0) = u2`` (so ``w(0) = N u2``) and
vanishing odd derivatives.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate, special

from .errors import QuadratureFailure, StepFailure
from .kernels import ProblemParams, quartic_green, sphere_area


class Trajectory(str, Enum):
    BOUNDED_OSCILLATORY = "BoundedOscillatory"
    BLOWUP = "Blowup"
    UNDETERMINED = "Undetermined"


@dataclass
class ShootOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    r0: float = 1e-3
    overflow: float = 1e6
    bound_factor: float = 2.0
    min_sign_changes: int = 3
    samples: int = 4000
    min_step: float = 1e-12


@dataclass
class RadialTrajectory:
    """Sampled radial solution with its classification."""

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    classification: Trajectory
    blowup_radius: float | None = None
    trivial: bool = False
    info: dict = field(default_factory=dict)

    def describe(self) -> dict:
        return {
            "classification": self.classification.value,
            "blowup_radius": self.blowup_radius,
            "trivial": self.trivial,
            "r_end": float(self.r[-1]),
            "max_abs_u": float(np.max(np.abs(self.u))),
            **self.info,
        }


def _gamma_fn(params: ProblemParams):
    g = params.gamma
    if callable(g):
        return g
    if np.ndim(g) != 0:
        raise ValueError("radial shooting needs a constant or a callable radial Gamma(r)")
    c = float(g)
    return lambda r: c


def series_start(params: ProblemParams, u0: float, u2: float, r0: float) -> np.ndarray:
    """``(u, u', w, w')`` at ``r0`` from the regular Taylor expansion at the origin."""
    N = params.dim
    gam = _gamma_fn(params)(0.0)
    w0 = N * u2
    s0 = params.beta * w0 - params.alpha * u0 + gam * abs(u0) ** (params.p - 2) * u0
    # Delta r^2 = 2N and Delta r^4 = 4(N+2) r^2
    c2 = w0 / (2 * N)
    c4 = s0 / (8 * N * (N + 2))
    d2 = s0 / (2 * N)
    u = u0 + c2 * r0**2 + c4 * r0**4
    du = 2 * c2 * r0 + 4 * c4 * r0**3
    w = w0 + d2 * r0**2
    dw = 2 * d2 * r0
    return np.array([u, du, w, dw])


def _sign_changes(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def classify(r: np.ndarray, u: np.ndarray, r_max: float, opts: ShootOptions) -> Trajectory:
    """Bounded-oscillatory test on a trajectory that reached ``r_max``."""
    first = r <= 0.5 * r_max
    second = ~first
    last_quarter = r >= 0.75 * r_max
    if not np.any(second) or not np.any(first):
        return Trajectory.UNDETERMINED
    bounded = np.max(np.abs(u[second])) <= opts.bound_factor * np.max(np.abs(u[first]))
    oscill = _sign_changes(u[last_quarter]) >= opts.min_sign_changes
    return Trajectory.BOUNDED_OSCILLATORY if bounded and oscill else Trajectory.UNDETERMINED


def radial_shoot(params: ProblemParams, u0: float, u2: float, r_max: float = 200.0,
                 opts: ShootOptions | None = None) -> RadialTrajectory:
    """Integrate the radial system from the origin and classify the result.

    Raises
    ------
    StepFailure
        The integrator could not proceed (step below ``opts.min_step``).
    """
    opts = opts or ShootOptions()
    if params.p is None:
        raise ValueError("radial shooting needs the exponent p")
    N = params.dim
    al, be, p = params.alpha, params.beta, params.p
    gam = _gamma_fn(params)
    r0 = opts.r0
    if u0 == 0 and u2 == 0:
        r = np.linspace(r0, r_max, opts.samples)
        z = np.zeros_like(r)
        return RadialTrajectory(r, z, z, z, z, Trajectory.UNDETERMINED, trivial=True)

    def rhs(r, y):
        u, du, w, dw = y
        return [du, w - (N - 1) / r * du, dw,
                be * w - al * u + gam(r) * abs(u) ** (p - 2) * u - (N - 1) / r * dw]

    def overflow(r, y):
        return abs(y[0]) - opts.overflow

    overflow.terminal = True
    overflow.direction = 1
    y0 = series_start(params, u0, u2, r0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = integrate.solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=opts.rtol, atol=opts.atol,
                                  events=overflow, dense_output=True)
    if sol.status == -1:
        raise StepFailure(f"integration failed near r={sol.t[-1]:g}: {sol.message}")
    r_end = float(sol.t[-1])
    r = np.linspace(r0, r_end, opts.samples)
    y = sol.sol(r)
    info = {"u0": u0, "u2": u2, "r_max": r_max, "rtol": opts.rtol, "nfev": int(sol.nfev)}
    if sol.status == 1 and len(sol.t_events[0]):
        rb = float(sol.t_events[0][0])
        return RadialTrajectory(r, *y, Trajectory.BLOWUP, blowup_radius=rb, info=info)
    cls = classify(r, y[0], r_max, opts)
    return RadialTrajectory(r, *y, cls, info=info)


def regular_modes(params: ProblemParams, r):
    """Regular radial solutions ``phi_j`` of ``(Delta + a_j) phi = 0`` with ``phi_j(0) = 1``.

    ``a > 0`` gives ``Gamma(N/2) (2/(k r))^nu J_nu(k r)``, ``a < 0`` the
    modified-Bessel counterpart (exponentially growing), ``a = 0`` the constant.
    """
    r = np.asarray(r, dtype=float)
    N = params.dim
    nu = N / 2.0 - 1.0
    out = []
    for a in (params.a1, params.a2):
        if a == 0:
            out.append(np.ones_like(r))
            continue
        k = math.sqrt(abs(a))
        t = k * r
        bess = special.jv(nu, t) if a > 0 else special.iv(nu, t)
        out.append(special.gamma(N / 2.0) * (2.0 / t) ** nu * bess)
    return out


def linearized_solution(params: ProblemParams, u0: float, u2: float, r):
    """Solution of the linear radial problem ``L u = 0`` with the same regular data.

    ``u = A phi_1 + B phi_2`` with ``A + B = u0`` and ``-a1 A - a2 B = N u2``.
    """
    a1, a2 = params.a1, params.a2
    N = params.dim
    A = (-N * u2 - a2 * u0) / (a1 - a2)
    B = u0 - A
    p1, p2 = regular_modes(params, r)
    return A * p1 + B * p2


def dichotomy_sweep(params: ProblemParams, amplitude_grid, r_max: float = 200.0, seed: int | None = None,
                    opts: ShootOptions | None = None) -> dict:
    """Classify every ``(u0, u2)`` in ``amplitude_grid``.

    ``seed`` is recorded for provenance when the grid was drawn at random.
    """
    rows = []
    for u0, u2 in amplitude_grid:
        try:
            tr = radial_shoot(params, float(u0), float(u2), r_max, opts)
            cls, rb = tr.classification.value, tr.blowup_radius
        except StepFailure:
            cls, rb = "StepFailure", None
        rows.append({"u0": float(u0), "u2": float(u2), "classification": cls, "blowup_radius": rb})
    n = len(rows)
    fractions = {}
    for c in [t.value for t in Trajectory] + ["StepFailure"]:
        k = sum(row["classification"] == c for row in rows)
        fractions[c] = k / n if n else 0.0
    return {"params": params.describe(), "r_max": r_max, "seed": seed, "count": n, "rows": rows,
            "fractions": fractions}


def disk_grid(radius: float, count: int, seed: int) -> np.ndarray:
    """Seeded uniform samples of the disk ``|(u0, u2)| <= radius``."""
    rng = np.random.default_rng(seed)
    rad = radius * np.sqrt(rng.uniform(size=count))
    th = rng.uniform(0, 2 * np.pi, size=count)
    return np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)


def box_grid(half_width: float, count: int, seed: int) -> np.ndarray:
    """Seeded uniform samples of ``[-h, h]^2``."""
    return np.random.default_rng(seed).uniform(-half_width, half_width, size=(count, 2))


# ----------------------------------------------------------------------------- radial resolvent
def _quad(fn, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return integrate.quad(fn, a, b, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"quadrature on [{a:g}, {b:g}] failed: {exc}") from exc


def spherical_mean(kernel, r: float, s: float, dim: int, epsrel: float = 1e-10) -> float:
    """Mean of ``kernel(|x - y|)`` over ``|y| = s`` for ``|x| = r``.

    With ``t = |x - y|`` the mean is
    ``c_N int_{|r-s|}^{r+s} kernel(t) t/(rs) [(t^2-(r-s)^2)((r+s)^2-t^2)]^{(N-3)/2} / (2rs)^{N-3} dt``
    and ``c_N = |S^{N-2}| / |S^{N-1}|``; the endpoint powers go into the
    quadrature weight.
    """
    lo, hi = abs(r - s), r + s
    if s == 0:
        return float(kernel(r))
    if r == 0:
        return float(kernel(s))
    e = (dim - 3) / 2.0
    c = sphere_area(dim - 1) / sphere_area(dim) if dim > 2 else 1.0 / np.pi

    def smooth(t):
        return kernel(t) * t / (r * s) * ((t + lo) * (hi + t)) ** e / (2 * r * s) ** (dim - 3)

    val, _ = _quad(smooth, lo, hi, weight="alg", wvar=(e, e), limit=200, epsrel=epsrel, epsabs=0.0)
    return c * val


def radial_resolvent(params: ProblemParams, f, r_grid, support: float, epsrel: float = 1e-9) -> np.ndarray:
    """``(Re G * f)(r)`` for a radial source ``f(s)`` supported in ``[0, support]``.

    ``u(r) = |S^{N-1}| int_0^support f(s) s^{N-1} M(r, s) ds`` with ``M`` the
    spherical mean of ``Re G``.

    Raises
    ------
    QuadratureFailure
        An inner or outer quadrature did not converge.
    """
    dim = params.dim

    def kernel(t):
        return float(np.real(quartic_green(params, t))) if t > 0 else _origin(params)

    area = sphere_area(dim)
    out = []
    for r in np.atleast_1d(r_grid):
        r = float(r)

        def outer(s):
            return f(s) * s ** (dim - 1) * spherical_mean(kernel, r, s, dim)

        pts = [r] if 0 < r < support else None
        val, _ = _quad(outer, 0.0, support, points=pts, limit=200, epsrel=epsrel, epsabs=1e-14)
        out.append(area * val)
    return np.array(out)


def _origin(params: ProblemParams) -> float:
    from .kernels import quartic_green_origin

    return float(np.real(quartic_green_origin(params)))


def radial_operator(params: ProblemParams, u: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``L u`` for samples on a uniform radial grid by centred finite differences.

    Returned on the interior ``r[2:-2]``.
    """
    h = r[1] - r[0]
    N = params.dim

    def lap(v):
        d1 = (v[2:] - v[:-2]) / (2 * h)
        d2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        return d2 + (N - 1) / r[1:-1][: len(d1)] * d1

    lu = lap(u)
    rr = r[1:-1]
    h2 = rr[1:-1]
    llu = (lu[2:] - 2 * lu[1:-1] + lu[:-2]) / h**2 + (N - 1) / h2 * (lu[2:] - lu[:-2]) / (2 * h)
    return llu - params.beta * lu[1:-1] + params.alpha * u[2:-2]
