"""Command-line tools for the fourth-order nonlinear Helmholtz solver.

Every subcommand writes a JSON report carrying a ``schema`` version and a run
manifest (command line, parameters, grid, seeds, tolerances, tool version,
wall time and SHA-256 digests of the artifacts).  Options can also come from a
flat ``key = value`` file passed with ``--config``; flags override the file.

Relative output paths resolve against ``$QUARTIC_HELMHOLTZ_OUT`` when set.

Exit status: 0 on success, 1 on a computation error (a JSON error report is
printed), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import QuarticHelmholtzError
from .kernels import ProblemParams, quartic_green
from .spectral import PHYSICAL, Field, SpectralGrid, read_field, write_field

SCHEMA = "quartic-helmholtz/1"
OUT_ENV = "QUARTIC_HELMHOLTZ_OUT"


class UsageError(Exception):
    """Flags that parse but do not describe a valid run."""


@dataclass
class RunManifest:
    command: list
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    version: str = __version__
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        self._start = time.perf_counter()

    def add_output(self, path: Path) -> None:
        self.outputs[str(path)] = hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "value"):
        return o.value
    return str(o)


def _clean(obj):
    """Replace non-finite floats so reports stay strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(json.loads(json.dumps(obj, default=_json_default))), indent=2)


def _out_path(name: str | None) -> Path | None:
    if name is None:
        return None
    p = Path(name)
    base = os.environ.get(OUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# ----------------------------------------------------------------------------- flag parsing helpers
def _grid_spec(text: str) -> tuple[int, float]:
    try:
        m, L = text.split(",")
        m, L = int(m), float(L)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected M,L, got {text!r}") from None
    if m < 2 or m & (m - 1) or not L > 0:
        raise argparse.ArgumentTypeError(f"M must be a power of two and L positive, got {text!r}")
    return m, L


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _gamma_spec(text: str):
    kind, _, val = text.partition(":")
    if kind == "const":
        try:
            return float(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad constant in {text!r}") from None
    if kind == "file":
        return ("file", val)
    raise argparse.ArgumentTypeError("gamma must be const:<value> or file:<path.npy>")


def _resolve_gamma(spec):
    if isinstance(spec, tuple):
        return np.load(spec[1])
    return spec


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _params(a, with_p: bool = True) -> ProblemParams:
    gamma = _resolve_gamma(getattr(a, "gamma", 1.0))
    return ProblemParams(a.alpha, a.beta, a.N, a.p if with_p else None, gamma)


def _grid(a) -> SpectralGrid:
    m, L = a.grid
    return SpectralGrid(a.N, L, m)


def _write_report(path: Path | None, report: dict, manifest: RunManifest) -> None:
    report = {"schema": SCHEMA, **report}
    if not manifest.wall_time:
        manifest.wall_time = time.perf_counter() - manifest._start
    if path is None:
        report["manifest"] = asdict(manifest)
        print(_dump(report))
        return
    mpath = path.with_name(path.name.replace(".json", "") + ".manifest.json")
    report["manifest"] = str(mpath)
    path.write_text(_dump(report))
    manifest.add_output(path)
    mpath.write_text(_dump(asdict(manifest)))


def _grid_meta(grid: SpectralGrid, params: ProblemParams) -> dict:
    meta = grid.describe()
    meta["shell_clearance"] = grid.shell_clearance((params.a1, params.a2))
    return meta


# ----------------------------------------------------------------------------- subcommands
def cmd_solve(a, man: RunManifest) -> int:
    from .dual_solver import DualOperator, SolverOptions, mountain_pass_solve, recover_primal

    params = _params(a)
    grid = _grid(a)
    op = DualOperator(params, grid)
    opts = SolverOptions(tol=a.tol, max_iter=a.max_iter, init=a.init, seed=a.seed)
    man.params, man.grid = params.describe(), _grid_meta(grid, params)
    man.schedule = op.resolvent.describe()
    man.seeds = {"seed": a.seed, "init": a.init}
    man.tolerances = {"tol": a.tol, "tol_consistency": 1e-4, "tol_pde": 1e-4}
    state = mountain_pass_solve(params, grid, opts, op=op)
    u, f, rec = recover_primal(state, params, op=op)
    prefix = _out_path(a.out)
    paths = {k: prefix.with_name(prefix.name + s) for k, s in
             (("v", ".v.bin"), ("u", ".u.bin"), ("trace", ".trace.csv"), ("report", ".report.json"))}
    write_field(paths["v"], state.v)
    write_field(paths["u"], u)
    with open(paths["trace"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["iteration", "phase", "J", "grad_norm", "merit"])
        w.writeheader()
        w.writerows(state.trace)
    for k in ("v", "u", "trace"):
        man.add_output(paths[k])
    from .spectral import lp_norm

    report = {
        "command": "solve",
        **state.report(),
        "grad_norm_tol": a.tol,
        "identity_defect_tol": a.tol,
        "norm_v_pconj": lp_norm(state.v, params.p_conj),
        "norm_u_inf": float(np.abs(u.values).max()),
        **rec,
        "grid": man.grid,
        "artifacts": {k: str(p) for k, p in paths.items()},
    }
    _write_report(paths["report"], report, man)
    return 0


def cmd_resolvent_apply(a, man: RunManifest) -> int:
    from .resolvent import EpsSchedule, QuarticResolvent, pde_residual

    params = _params(a, with_p=False)
    f = read_field(a.input)
    if f.domain != PHYSICAL:
        raise UsageError("input field must be in the physical domain")
    grid = f.grid
    if a.grid is not None and (a.grid[0] != grid.points or a.grid[1] != grid.half_width):
        raise UsageError(f"--grid {a.grid} does not match the input field ({grid.points}, {grid.half_width})")
    sched = EpsSchedule.for_grid(grid, params, levels=a.levels, eps0=a.eps0)
    res = QuarticResolvent(params, grid, sched, boundary=a.boundary)
    u, err = res.apply(f, full_output=True)
    resid = pde_residual(u, f, params, window=res.window if a.boundary == "free" else None)
    out = _out_path(a.out)
    write_field(out, u)
    man.add_output(out)
    man.params, man.grid, man.schedule = params.describe(), _grid_meta(grid, params), res.describe()
    report = {"command": "resolvent-apply", "extrapolation_error": err, "residual": resid,
              "residual_window": res.window, "window_fraction": res.window, "output": str(out)}
    _write_report(_out_path(a.report), report, man)
    return 0


def _solution_fields(a):
    """``(params, v, u, f, op)`` from a stored dual iterate, recomputed on the padded work grid."""
    from .dual_solver import DualOperator, DualState, recover_primal

    params = _params(a)
    v = read_field(a.solution)
    grid = v.grid
    if grid.dim != params.dim:
        raise UsageError(f"solution is {grid.dim}-dimensional but --N {params.dim}")
    op = DualOperator(params, grid)
    vv = v.values.real
    state = DualState(Field(grid, vv), op.J(vv), math.nan, math.nan, 0)
    u, f, rec = recover_primal(state, params, op=op, tol_consistency=math.inf, tol_pde=math.inf)
    return params, op, u, f, rec


def cmd_farfield(a, man: RunManifest) -> int:
    from .analysis import farfield_error

    params, op, u, f, rec = _solution_fields(a)
    res = op.resolvent
    ue = res.apply_real(Field(u.grid, op.g_p * read_field(a.solution).values.real), extended=True)
    fe = Field(res.work_grid, res.embed(f.values))
    err = farfield_error(ue, fe, params, a.radii, inner=a.inner)
    tail = err[-3:]
    man.params, man.grid = params.describe(), _grid_meta(u.grid, params)
    report = {"command": "farfield", "R": a.radii, "error": err.tolist(),
              "decreasing_last_three": bool(np.all(np.diff(tail) < 0)), "inner": a.inner,
              "exact_radius": math.sqrt(u.grid.dim) * u.grid.half_width}
    _write_report(_out_path(a.report), report, man)
    return 0


def cmd_radiation_check(a, man: RunManifest) -> int:
    from .analysis import component_fields, radiation_residual
    from .kernels import Case

    params, op, u, f, rec = _solution_fields(a)
    res = op.resolvent
    if params.case is Case.TWO_HELMHOLTZ:
        comps = component_fields(params, f)
        out = radiation_residual(comps, params, a.radii)
        inc = radiation_residual(tuple(c.conj() for c in comps), params, a.radii)
        report = {"outgoing": [o.tolist() for o in out], "incoming": [o.tolist() for o in inc]}
    else:
        ut = res.apply(f, extended=True)
        out = radiation_residual(ut, params, a.radii)
        inc = radiation_residual(ut.conj(), params, a.radii)
        report = {"outgoing": out.tolist(), "incoming": inc.tolist(),
                  "decreasing": bool(np.all(np.diff(out) < 0)),
                  "incoming_over_outgoing": float(inc[-1] / out[-1])}
    man.params, man.grid = params.describe(), _grid_meta(u.grid, params)
    _write_report(_out_path(a.report), {"command": "radiation-check", "R": a.radii, **report}, man)
    return 0


def cmd_norm_probe(a, man: RunManifest) -> int:
    from .analysis import FamilySpec, norm_probe

    params = _params(a, with_p=False)
    grid = _grid(a)
    q = math.inf if a.q == "inf" else float(a.q)
    spec = FamilySpec(grid, count=a.count)
    out = norm_probe(params, a.p_exp, q, spec, seed=a.seed)
    man.params, man.grid, man.seeds = params.describe(), _grid_meta(grid, params), {"seed": a.seed}
    man.tolerances = {"stability": 0.25}
    _write_report(_out_path(a.report), {"command": "norm-probe", **out}, man)
    return 0


def cmd_tail_check(a, man: RunManifest) -> int:
    from .analysis import tail_integrability

    params = _params(a, with_p=False)
    out = tail_integrability(params, a.r)
    man.params = params.describe()
    _write_report(_out_path(a.report), {"command": "tail-check", **out}, man)
    return 0


def cmd_stein_tomas(a, man: RunManifest) -> int:
    from .analysis import FamilySpec, stein_tomas_probe

    grid = SpectralGrid(a.N, a.grid[1], a.grid[0])
    fields = FamilySpec(grid, count=a.count).fields(a.seed)
    out = stein_tomas_probe(fields, a.radii, a.p_exp, seed=a.seed)
    man.grid, man.seeds = grid.describe(), {"seed": a.seed}
    _write_report(_out_path(a.report), {"command": "stein-tomas", **out}, man)
    return 0


def cmd_radial_shoot(a, man: RunManifest) -> int:
    from .radial import radial_shoot

    params = _params(a)
    tr = radial_shoot(params, a.u0, a.u2, a.rmax)
    out = _out_path(a.out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "u", "du", "w", "dw"])
        for row in zip(tr.r, tr.u, tr.du, tr.w, tr.dw):
            w.writerow([repr(float(x)) for x in row])
    man.add_output(out)
    man.params = params.describe()
    _write_report(_out_path(a.report), {"command": "radial-shoot", "u0": a.u0, "u2": a.u2, "r_max": a.rmax,
                                        **tr.describe(), "trajectory": str(out)}, man)
    return 0


def _parse_grid_spec(text: str):
    """``disk:<radius>:<count>`` or ``box:<half width>:<count>``."""
    from .radial import box_grid, disk_grid

    try:
        kind, size, count = text.split(":")
        size, count = float(size), int(count)
    except ValueError:
        raise UsageError(f"grid spec must be disk:R:n or box:H:n, got {text!r}") from None
    if kind not in ("disk", "box"):
        raise UsageError(f"unknown grid spec kind {kind!r}")
    return kind, size, count, (disk_grid if kind == "disk" else box_grid)


def cmd_radial_sweep(a, man: RunManifest) -> int:
    from .radial import dichotomy_sweep

    params = _params(a)
    kind, size, count, make = _parse_grid_spec(a.grid_spec)
    out = dichotomy_sweep(params, make(size, count, a.seed), a.rmax, seed=a.seed)
    path = _out_path(a.out)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["u0", "u2", "classification", "blowup_radius"])
        w.writeheader()
        w.writerows(out["rows"])
    man.add_output(path)
    man.params, man.seeds = params.describe(), {"seed": a.seed}
    summary = {k: v for k, v in out.items() if k != "rows"}
    _write_report(_out_path(a.report), {"command": "radial-sweep", "grid_spec": a.grid_spec, **summary,
                                        "map": str(path)}, man)
    return 0


def cmd_kernel_table(a, man: RunManifest) -> int:
    params = _params(a, with_p=False)
    r = np.linspace(a.rmax / a.count, a.rmax, a.count)
    g = quartic_green(params, r)
    path = _out_path(a.out)
    if path is None:
        w = csv.writer(sys.stdout)
    else:
        fh = open(path, "w", newline="")
        w = csv.writer(fh)
    w.writerow(["r", "Re", "Im"])
    for ri, gi in zip(r, g):
        w.writerow([repr(float(ri)), repr(float(gi.real)), repr(float(gi.imag))])
    if path is not None:
        fh.close()
        man.add_output(path)
        man.params = params.describe()
        _write_report(_out_path(a.report) or path.with_suffix(".json"),
                      {"command": "kernel-table", "rows": a.count, "rmax": a.rmax, "table": str(path)}, man)
    return 0


def cmd_selfcheck(a, man: RunManifest) -> int:
    from .selfcheck import run_checks

    results = run_checks()
    ok = all(r["passed"] for r in results)
    _write_report(_out_path(a.report), {"command": "selfcheck", "passed": ok, "checks": results}, man)
    return 0 if ok else 1


# ----------------------------------------------------------------------------- parser
def _add_operator(p, with_p=True, with_grid=True, dim=None):
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--N", type=int, required=dim is None, default=dim)
    if with_p:
        p.add_argument("--p", type=float, required=True)
        p.add_argument("--gamma", type=_gamma_spec, default=1.0, help="const:<value> or file:<samples.npy>")
    if with_grid:
        p.add_argument("--grid", type=_grid_spec, default=(128, 16.0), help="M,L")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quartic-helmholtz", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="flat key = value file; flags override it")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="dual mountain-pass solve and primal recovery")
    _add_operator(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["ascent_z", "random_seeded"], default="ascent_z")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("resolvent-apply", help="apply the outgoing resolvent to a stored field")
    _add_operator(p, with_p=False)
    p.set_defaults(grid=None)
    p.add_argument("--input", required=True)
    p.add_argument("--eps0", type=float, default=None)
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--boundary", choices=["free", "periodic"], default="free")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_resolvent_apply)

    for name, func, radii in (("farfield", cmd_farfield, "8,12,16,20,22"),
                              ("radiation-check", cmd_radiation_check, "8,12,16,20,22")):
        p = sub.add_parser(name)
        _add_operator(p, with_grid=False)
        p.add_argument("--solution", required=True, help="dual iterate written by solve (prefix.v.bin)")
        p.add_argument("--radii", type=_float_list, default=_float_list(radii))
        if name == "farfield":
            p.add_argument("--inner", type=float, default=2.0)
        p.add_argument("--report")
        p.set_defaults(func=func)

    p = sub.add_parser("norm-probe", help="window-doubling stability of ||R f||_q / ||f||_p")
    _add_operator(p, with_p=False)
    p.set_defaults(grid=(64, 8.0))
    p.add_argument("--p-exp", type=float, required=True, help="exponent p of the source norm")
    p.add_argument("--q", default="inf", help="target exponent or inf")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_norm_probe)

    p = sub.add_parser("tail-check", help="integrability of |G|^r at infinity")
    _add_operator(p, with_p=False, with_grid=False)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_tail_check)

    p = sub.add_parser("stein-tomas", help="sphere restriction ratios over a seeded family")
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--grid", type=_grid_spec, default=(64, 8.0))
    p.add_argument("--p-exp", type=float, required=True)
    p.add_argument("--radii", type=_float_list, default=_float_list("0.5,1,2"))
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_stein_tomas)

    p = sub.add_parser("radial-shoot", help="integrate one radial trajectory")
    _add_operator(p, with_grid=False)
    p.add_argument("--u0", type=float, required=True)
    p.add_argument("--u2", type=float, required=True)
    p.add_argument("--rmax", type=float, default=200.0)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_radial_shoot)

    p = sub.add_parser("radial-sweep", help="classify a seeded set of radial initial data")
    _add_operator(p, with_grid=False)
    p.add_argument("--grid-spec", required=True, help="disk:R:n or box:H:n")
    p.add_argument("--rmax", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_radial_sweep)

    p = sub.add_parser("kernel-table", help="CSV of the Green's function G(r)")
    _add_operator(p, with_p=False, with_grid=False)
    p.add_argument("--rmax", type=float, required=True)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=cmd_kernel_table)

    p = sub.add_parser("selfcheck", help="run the fast invariant suite")
    p.add_argument("--report")
    p.set_defaults(func=cmd_selfcheck)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with values from ``--config`` as defaults of the chosen subcommand."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        conf = read_config(known.config)
        choices = ap._subparsers._group_actions[0].choices
        name = next((t for t in rest if t in choices), None)
        if name is None:
            raise UsageError("no subcommand given")
        actions = {a.dest: a for a in choices[name]._actions}
        unknown = sorted(set(conf) - set(actions))
        if unknown:
            raise UsageError(f"unknown config keys for {name}: {unknown}")
        for k, v in conf.items():
            act = actions[k]
            try:
                act.default = act.type(v) if act.type else v
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {k}: {exc}") from None
            act.required = False
    return ap.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        a = _apply_config(ap, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    man = RunManifest(command=["quartic-helmholtz", *argv])
    t0 = time.perf_counter()
    try:
        code = a.func(a, man)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (QuarticHelmholtzError, ArithmeticError, ValueError, OSError) as exc:
        man.wall_time = time.perf_counter() - t0
        err = {"schema": SCHEMA, "command": a.command, "error": type(exc).__name__, "message": str(exc),
               "manifest": asdict(man)}
        print(_dump(err))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
