"""Dual variational formulation and a mountain-pass solver.

With ``v = Gamma^{1/p'} |u|^{p-2} u`` the equation ``L u = Gamma |u|^{p-2} u``
becomes ``|v|^{p'-2} v = K v`` where ``K = Gamma^{1/p} R Gamma^{1/p}`` and ``R``
is the real part of the outgoing resolvent.  Solutions are critical points of

    J(v) = (1/p') ||v||_{p'}^{p'} - (1/2) <v, K v>.

``J(t v)`` has a single maximum on each ray with ``<v, K v> > 0``, so the
mountain-pass level is the infimum over rays of that maximum, equivalently the
supremum of the Nehari quotient ``Q(v) = <v, K v> / ||v||_{p'}^2``.

The solver works in ``z = |v|^{p'-2} v`` (so ``v = |z|^{p-2} z``), where both
``Q`` and the stationarity residual ``F(z) = z - K(|z|^{p-2} z)`` are smooth
because ``p > 2``:

1. *ascent*: L-BFGS on ``-Q(z)`` from the initial direction, then projection
   to the ray maximum;
2. *newton*: trust-region least squares on ``F(z) = 0`` with the exact
   Jacobian ``I - K diag((p-1)|z|^{p-2})``.

``v`` is supported on the grid-symmetric box (the layer at ``x = -L`` has no
mirror node and is excluded).  For constant ``Gamma`` the problem is reduced to
fields invariant under the symmetry group of the cube; critical points of the
reduced functional are critical points of ``J``.  This removes the
translation null directions that stall Newton iterations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import LinearOperator

from .errors import ConsistencyFailure, DegenerateCollapse, GridTooCoarse, NoConvergence
from .kernels import ProblemParams
from .resolvent import EpsSchedule, QuarticResolvent, pde_residual
from .spectral import FREQUENCY, PHYSICAL, Field, SpectralGrid, forward_ft, inverse_ft, lp_norm, power_map


def gamma_samples(params: ProblemParams, grid: SpectralGrid):
    """``Gamma`` on the grid: a float for constant coefficients, else an array."""
    g = params.gamma
    if callable(g):
        vals = np.asarray(g(*np.meshgrid(*([grid.x] * grid.dim), indexing="ij")), dtype=float)
    elif np.ndim(g) == 0:
        return float(g)
    else:
        vals = np.asarray(g, dtype=float)
        if vals.shape != grid.shape:
            cell = vals.shape
            reps = [grid.points // c for c in cell]
            if len(cell) != grid.dim or any(r * c != grid.points for r, c in zip(reps, cell)):
                raise ValueError(f"Gamma samples of shape {cell} do not tile the grid {grid.shape}")
            vals = np.tile(vals, reps)
    if not np.all(np.isfinite(vals)) or vals.min() <= 0:
        raise ValueError("Gamma must be finite with positive infimum")
    return vals


def support_mask(grid: SpectralGrid) -> np.ndarray:
    """Nodes whose mirror images through the origin are nodes: all but the ``x = -L`` layers."""
    inner = np.arange(grid.points) > 0
    mask = np.ones(grid.shape, dtype=bool)
    for d in range(grid.dim):
        mask &= grid.axis(inner, d)
    return mask


class DualOperator:
    """``K = Gamma^{1/p} R Gamma^{1/p}`` with its resolvent tabulated once.

    The free boundary model uses the padded resolvent, exact on the whole box.
    """

    def __init__(self, params: ProblemParams, grid: SpectralGrid, sched: EpsSchedule | None = None,
                 boundary: str = "free", resolvent: QuarticResolvent | None = None):
        if params.p is None:
            raise ValueError("the dual problem needs the exponent p")
        self.params = params
        self.grid = grid
        if resolvent is None:
            resolvent = QuarticResolvent(params, grid, sched, boundary, pad=boundary == "free")
        self.resolvent = resolvent
        gam = gamma_samples(params, grid)
        self.gamma = gam
        self.g_p = gam ** (1.0 / params.p)
        self.g_pc = gam ** (1.0 / params.p_conj)
        self.p = params.p
        self.pc = params.p_conj
        self.cell = grid.cell_volume
        self.support = support_mask(grid)

    def R(self, f: np.ndarray) -> np.ndarray:
        """``Re R f`` on raw box arrays."""
        return self.resolvent.apply_real(Field(self.grid, np.asarray(f, dtype=float))).values

    def K(self, v: np.ndarray) -> np.ndarray:
        return self.g_p * self.R(self.g_p * v)

    def impulse_response(self) -> np.ndarray:
        """``R delta_0`` on the work grid, divided by the cell volume (kernel samples)."""
        res = self.resolvent
        wg = res.work_grid
        delta = np.zeros(wg.shape)
        delta[(wg.points // 2,) * wg.dim] = 1.0
        F = forward_ft(Field(wg, delta))
        F.values[...] *= res.multiplier(real=True)
        return inverse_ft(F).values.real / self.cell

    def pairing(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(a * b)) * self.cell

    def norm_pc(self, v: np.ndarray) -> float:
        return lp_norm(Field(self.grid, v), self.pc)

    def J(self, v: np.ndarray, Kv: np.ndarray | None = None) -> float:
        Kv = self.K(v) if Kv is None else Kv
        return self.norm_pc(v) ** self.pc / self.pc - 0.5 * self.pairing(v, Kv)

    def gradient(self, v: np.ndarray, Kv: np.ndarray | None = None) -> np.ndarray:
        Kv = self.K(v) if Kv is None else Kv
        return power_map(v, self.pc) - Kv

    def grad_norm(self, v: np.ndarray, Kv: np.ndarray | None = None) -> float:
        """``||J'(v)||_{L^p(S)} / ||v||_{p'}^{p'-1}`` over the support ``S`` (relative dual residual)."""
        g = np.where(self.support, self.gradient(v, Kv), 0.0)
        nv = self.norm_pc(v)
        if nv == 0:
            return 0.0
        return lp_norm(Field(self.grid, g), self.p) / nv ** (self.pc - 1.0)

    def ray_max(self, v: np.ndarray, Kv: np.ndarray | None = None):
        """``(t*, J(t* v))`` maximising ``J`` on the ray through ``v``; ``None`` if ``<v,Kv> <= 0``."""
        Kv = self.K(v) if Kv is None else Kv
        A = self.norm_pc(v) ** self.pc
        B = self.pairing(v, Kv)
        if not B > 0 or A == 0:
            return None
        t = (A / B) ** (1.0 / (2.0 - self.pc))
        return t, (1.0 / self.pc - 0.5) * t**self.pc * A


def _operator(params, grid, sched, op):
    return op if op is not None else DualOperator(params, grid, sched)


def K_map(v: Field, params: ProblemParams, sched: EpsSchedule | None = None, op: DualOperator | None = None) -> Field:
    """``Gamma^{1/p} R (Gamma^{1/p} v)``."""
    op = _operator(params, v.grid, sched, op)
    return v.like(op.K(np.asarray(v.values, dtype=float)))


def J_functional(v: Field, params: ProblemParams, sched: EpsSchedule | None = None,
                 op: DualOperator | None = None) -> float:
    """``(1/p') ||v||_{p'}^{p'} - (1/2) int v K v``."""
    op = _operator(params, v.grid, sched, op)
    return op.J(np.asarray(v.values, dtype=float))


def J_gradient(v: Field, params: ProblemParams, sched: EpsSchedule | None = None,
               op: DualOperator | None = None) -> Field:
    """``|v|^{p'-2} v - K v``, the L2 representative of ``J'(v)``."""
    op = _operator(params, v.grid, sched, op)
    return v.like(op.gradient(np.asarray(v.values, dtype=float)))


# ----------------------------------------------------------------------------- initial data
def _bump(t):
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def build_ascent_z(params: ProblemParams, grid: SpectralGrid, margin: float = 0.5, center: float = 2.0) -> Field:
    """Real ``z`` whose spectrum lies in ``{|xi|^2 >= a1 + margin}``.

    ``z_hat`` is a pair of compact bumps at ``+-xi0`` with
    ``|xi0| = center * sqrt(a1)`` along the first axis; its radius is the
    largest keeping ``|xi|^2 >= a1 + margin`` on the support.
    """
    k1 = math.sqrt(params.a1)
    if grid.nyquist <= math.sqrt(params.a1 + 1.0):
        raise GridTooCoarse(f"Nyquist radius {grid.nyquist:g} must exceed sqrt(a1 + 1)")
    c = center * k1
    w = c - math.sqrt(params.a1 + margin)
    if not w > 0:
        raise ValueError("bump centre must lie outside the sphere |xi|^2 = a1 + margin")
    if c + w >= grid.nyquist:
        raise GridTooCoarse(f"bump support reaches {c + w:g} beyond Nyquist {grid.nyquist:g}")
    xs = grid.freqs()
    d_minus = (xs[0] - c) ** 2
    d_plus = (xs[0] + c) ** 2
    rest = sum(x * x for x in xs[1:]) if grid.dim > 1 else 0.0
    zhat = _bump(np.sqrt(d_minus + rest) / w) + _bump(np.sqrt(d_plus + rest) / w)
    z = inverse_ft(Field(grid, zhat.astype(complex), FREQUENCY)).values.real
    z /= np.abs(z).max()
    return Field(grid, z, PHYSICAL)


def random_init(grid: SpectralGrid, seed: int, bumps: int = 4) -> Field:
    """Seeded sum of Gaussian bumps near the origin."""
    rng = np.random.default_rng(seed)
    xs = grid.coords()
    out = np.zeros(grid.shape)
    for _ in range(bumps):
        c = rng.normal(scale=1.0, size=grid.dim)
        s = rng.uniform(0.7, 1.5)
        amp = rng.normal()
        out += amp * np.exp(-sum((x - ci) ** 2 for x, ci in zip(xs, c)) / (2 * s * s))
    return Field(grid, out, PHYSICAL)


# ----------------------------------------------------------------------------- symmetric reduction
class SymmetricReduction:
    """Orbits of the support under coordinate reflections and permutations.

    ``K`` restricted to invariant fields acts on orbit values through the
    dense matrix ``kr[o, o'] = sum_{j in o'} k(x_{rep(o)} - x_j)``, where ``k``
    is the impulse response; ``diag(count) kr`` is symmetric.
    """

    def __init__(self, op: DualOperator):
        grid = op.grid
        M = grid.points
        c = np.abs(np.arange(M) - M // 2)
        coords = np.meshgrid(*([c] * grid.dim), indexing="ij")
        mask = op.support
        srt = np.sort(np.stack([a[mask] for a in coords], axis=-1), axis=-1)
        base = M // 2 + 1
        key = np.zeros(srt.shape[0], dtype=np.int64)
        for d in range(grid.dim):
            key = key * base + srt[:, d]
        _, inv = np.unique(key, return_inverse=True)
        self.size = int(inv.max()) + 1
        self.index = -np.ones(grid.shape, dtype=np.int64)
        self.index[mask] = inv
        self.count = np.bincount(inv)
        flat = np.flatnonzero(mask)
        order = np.argsort(inv, kind="stable")
        starts = np.concatenate([[0], np.cumsum(self.count)[:-1]])
        self.rep = flat[order[starts]]
        self.members = [flat[order[s : s + n]] for s, n in zip(starts, self.count)]
        self.grid = grid
        self.weights = self.count * grid.cell_volume
        self.matrix = self._matrix(op)

    def _matrix(self, op: DualOperator) -> np.ndarray:
        grid = self.grid
        kern = op.impulse_response() * op.cell * float(np.mean(op.g_p)) ** 2
        W = op.resolvent.work_grid.points
        shape = grid.shape
        rep_idx = np.array(np.unravel_index(self.rep, shape))  # (dim, n)
        out = np.zeros((self.size, self.size))
        for o, mem in enumerate(self.members):
            mem_idx = np.array(np.unravel_index(mem, shape))  # (dim, m)
            diff = rep_idx[:, :, None] - mem_idx[:, None, :] + W // 2
            out[:, o] = kern[tuple(diff)].sum(axis=1)
        return out

    def reduce(self, arr: np.ndarray) -> np.ndarray:
        """Orbit means of a box array (symmetrisation)."""
        m = self.index >= 0
        return np.bincount(self.index[m], weights=np.asarray(arr)[m], minlength=self.size) / self.count

    def expand(self, vals: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        m = self.index >= 0
        out[m] = vals[self.index[m]]
        return out


class FullSpace:
    """Identity reduction: every support node is a variable and ``K`` is applied by FFT."""

    def __init__(self, op: DualOperator):
        self.op = op
        self.mask = op.support
        self.size = int(self.mask.sum())
        self.weights = np.full(self.size, op.cell)

    def reduce(self, arr):
        return np.asarray(arr)[self.mask]

    def expand(self, vals):
        out = np.zeros(self.op.grid.shape)
        out[self.mask] = vals
        return out


def _gamma_constant(op: DualOperator) -> bool:
    return np.ndim(op.gamma) == 0


# ----------------------------------------------------------------------------- solver
@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 200
    init: str = "ascent_z"
    seed: int = 0
    ascent_iter: int = 2000
    symmetric: bool | None = None
    recenter: bool = True


@dataclass
class DualState:
    """Result of :func:`mountain_pass_solve`."""

    v: Field
    J_value: float
    grad_norm: float
    identity_defect: float
    iterations: int
    trace: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0

    def report(self) -> dict:
        return {
            "J": self.J_value,
            "grad_norm": self.grad_norm,
            "identity_defect": self.identity_defect,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }


def identity_defect(op: DualOperator, v: np.ndarray, Jv: float) -> float:
    """``|J - (1/p' - 1/2) ||v||_{p'}^{p'}| / |J|``."""
    target = (1.0 / op.pc - 0.5) * op.norm_pc(v) ** op.pc
    return abs(Jv - target) / abs(Jv) if Jv != 0 else math.inf


def _recenter(v: np.ndarray) -> np.ndarray:
    idx = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    shift = tuple(v.shape[d] // 2 - idx[d] for d in range(v.ndim))
    return np.roll(v, shift, axis=tuple(range(v.ndim)))


class _Reduced:
    """``Q``, ``F`` and the Jacobian in the variables of a reduction."""

    def __init__(self, op: DualOperator, red):
        self.op = op
        self.red = red
        self.p = op.p
        self.pc = op.pc
        self.w = red.weights
        self.dense = isinstance(red, SymmetricReduction)

    def K(self, v):
        if self.dense:
            return self.red.matrix @ v
        return self.red.reduce(self.op.K(self.red.expand(v)))

    def parts(self, z):
        v = power_map(z, self.p)
        Kv = self.K(v)
        A = float(np.sum(self.w * np.abs(v) ** self.pc))
        B = float(np.sum(self.w * v * Kv))
        return v, Kv, A, B

    def neg_quotient(self, z):
        """``-Q`` and its gradient in ``z``."""
        v, Kv, A, B = self.parts(z)
        if A == 0:
            return 0.0, np.zeros_like(z)
        Q = B / A ** (2.0 / self.pc)
        dv = (self.p - 1.0) * np.abs(z) ** (self.p - 2.0)
        grad = Q * (2.0 * self.w * Kv / B - 2.0 * self.w * z / A) * dv if B != 0 else \
            (2.0 * self.w * Kv / A ** (2.0 / self.pc)) * dv
        return -Q, -grad

    def residual(self, z):
        v = power_map(z, self.p)
        return np.sqrt(self.w) * (z - self.K(v))

    def jacobian(self, z):
        d = (self.p - 1.0) * np.abs(z) ** (self.p - 2.0)
        sw = np.sqrt(self.w)
        if self.dense:
            return sw[:, None] * (np.eye(len(z)) - self.red.matrix * d[None, :])

        def mv(x):
            return sw * (x - self.K(d * x))

        def rmv(y):
            # K is a symmetric matrix on grid values
            t = sw * y
            return t - d * self.K(t)

        n = len(z)
        return LinearOperator((n, n), matvec=mv, rmatvec=rmv, dtype=float)

    def nehari(self, z):
        """Rescale ``z`` to the ray maximum of ``J``; ``None`` if ``<v, K v> <= 0``."""
        v, _, A, B = self.parts(z)
        if not B > 0 or A == 0:
            return None
        t = (A / B) ** (1.0 / (2.0 - self.pc))
        # v -> t v  <=>  z -> t^{p'-1} z
        return z * t ** (self.pc - 1.0)


def _initial(params, grid, opts, op):
    if opts.init == "ascent_z":
        v = build_ascent_z(params, grid).values.copy()
    elif opts.init == "random_seeded":
        v = random_init(grid, opts.seed).values.copy()
    else:
        raise ValueError(f"unknown init {opts.init!r}")
    if opts.recenter and _gamma_constant(op):
        v = _recenter(v)
    return np.where(op.support, v, 0.0)


def mountain_pass_solve(params: ProblemParams, grid: SpectralGrid, opts: SolverOptions | None = None,
                        sched: EpsSchedule | None = None, op: DualOperator | None = None,
                        v0: np.ndarray | None = None) -> DualState:
    """Find a nontrivial critical point of ``J``: Nehari ascent, then trust-region Newton.

    ``v0`` overrides ``opts.init``.  The trace records every accepted step
    with its phase; the merit (``-Q`` in the ascent, ``||F||`` in the Newton
    phase) is nonincreasing within each phase.

    Raises
    ------
    DegenerateCollapse
        The iterate shrank below ``1e-12`` in ``L^{p'}``.
    NoConvergence
        Tolerances not met; ``exc.state`` holds the final iterate.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    op = _operator(params, grid, sched, op)
    symmetric = opts.symmetric if opts.symmetric is not None else _gamma_constant(op)
    if symmetric and not _gamma_constant(op):
        raise ValueError("symmetric reduction needs a constant Gamma")
    red = SymmetricReduction(op) if symmetric else FullSpace(op)
    prob = _Reduced(op, red)
    v_init = _initial(params, grid, opts, op) if v0 is None else np.where(op.support, v0, 0.0)
    if op.norm_pc(v_init) < 1e-12:
        raise DegenerateCollapse("initial iterate is zero")
    z = red.reduce(power_map(v_init, op.pc))
    trace = []

    def record(phase, it, z, merit):
        v = red.expand(power_map(z, op.p))
        Kv = op.K(v)
        Jv = op.J(v, Kv)
        trace.append({"iteration": it, "phase": phase, "J": Jv, "grad_norm": op.grad_norm(v, Kv),
                      "merit": merit})

    # phase 1: maximise the Nehari quotient
    if opts.ascent_iter > 0:
        counter = {"it": 0}

        def callback(zk):
            counter["it"] += 1
            if counter["it"] % 50 == 0:
                record("ascent", counter["it"], zk, prob.neg_quotient(zk)[0])

        res = optimize.minimize(prob.neg_quotient, z, jac=True, method="L-BFGS-B", callback=callback,
                                options={"maxiter": opts.ascent_iter, "gtol": 1e-12, "ftol": 1e-15,
                                         "maxcor": 20})
        z = res.x
    scaled = prob.nehari(z)
    if scaled is None:
        raise DegenerateCollapse("no ray maximum after the ascent phase (<v, K v> <= 0)")
    z = scaled
    record("nehari", len(trace), z, prob.neg_quotient(z)[0])

    # phase 2: trust-region Newton on F(z) = 0
    best = {"cost": math.inf}

    def fun(zz):
        r = prob.residual(zz)
        cost = 0.5 * float(r @ r)
        if cost < best["cost"]:
            best["cost"] = cost
            record("newton", len(trace), zz, math.sqrt(2 * cost))
        return r

    kw = {} if prob.dense else {"tr_solver": "lsmr"}
    res = optimize.least_squares(fun, z, jac=prob.jacobian, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                 max_nfev=opts.max_iter, x_scale="jac" if prob.dense else 1.0, **kw)
    z = res.x
    v = red.expand(power_map(z, op.p))
    if op.norm_pc(v) < 1e-12:
        raise DegenerateCollapse("dual iterate collapsed to zero")
    Kv = op.K(v)
    Jv = op.J(v, Kv)
    gn = op.grad_norm(v, Kv)
    defect = identity_defect(op, v, Jv)
    ok = gn <= opts.tol and defect <= opts.tol and Jv > 0
    st = DualState(Field(grid, v, PHYSICAL), Jv, gn, defect, len(trace), trace, ok, time.perf_counter() - t0)
    if not ok:
        raise NoConvergence(f"grad_norm {gn:.3e}, identity defect {defect:.3e} (tol {opts.tol:g})", st)
    return st


def recover_primal(state: DualState, params: ProblemParams, sched: EpsSchedule | None = None,
                   op: DualOperator | None = None, tol_consistency: float = 1e-4, tol_pde: float = 1e-4,
                   window: float | None = 0.5):
    """``u = R(Gamma^{1/p} v)`` and ``f = Gamma |u|^{p-2} u`` with both consistency checks.

    The consistency defect ``||v - Gamma^{1/p'}|u|^{p-2}u||_{p'} / ||v||_{p'}``
    is taken over the support of ``v``.  The PDE residual is evaluated over
    the ball of radius ``window * L`` with ``L u`` computed on the resolvent's
    work grid, where ``u`` is a trigonometric polynomial.

    Returns ``(u, f, report)`` where ``report`` holds the two defects.
    """
    v = state.v
    grid = v.grid
    op = _operator(params, grid, sched, op)
    vv = np.asarray(v.values, dtype=float)
    res = op.resolvent
    src = Field(grid, op.g_p * vv)
    u_ext = res.apply_real(src, extended=True)
    u = res.restrict(u_ext.values).copy()
    back = np.where(op.support, op.g_pc * power_map(u, params.p), 0.0)
    nv = op.norm_pc(vv)
    consistency = op.norm_pc(vv - back) / nv if nv > 0 else 0.0
    f = op.gamma * power_map(u, params.p)
    f_src = Field(res.work_grid, res.embed(np.broadcast_to(f, grid.shape)))
    if np.any(f):
        frac = None if window is None else window * grid.half_width / res.work_grid.half_width
        resid = pde_residual(u_ext, f_src, params, window=frac)
    else:
        resid = 0.0
    uf = Field(grid, u, PHYSICAL)
    ff = Field(grid, f, PHYSICAL)
    report = {"consistency_defect": consistency, "pde_residual": resid, "residual_window": window,
              "tol_consistency": tol_consistency, "tol_pde": tol_pde}
    if consistency > tol_consistency or resid > tol_pde:
        raise ConsistencyFailure(
            f"consistency defect {consistency:.3e}, PDE residual {resid:.3e}", consistency, resid
        )
    return uf, ff, report
