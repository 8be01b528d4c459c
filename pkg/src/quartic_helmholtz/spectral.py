"""Periodic-box discretisation and unitary discrete Fourier transforms.

Conventions
-----------
Physical nodes ``x_j = -L + j h`` with ``h = 2L/M``.  Frequencies are
``xi_k = (pi/L)(k + o)`` with ``k`` in FFT order and ``o = 1/2`` when the
half-cell offset is active (the default).  The offset lattice is symmetric
under ``xi -> -xi`` and keeps lattice points off the singular spheres; the
actual distance is reported by :meth:`SpectralGrid.shell_clearance`.

``forward_ft`` approximates ``(2 pi)^{-N/2} int f(x) e^{-i x.xi} dx`` by the
midpoint rule and ``inverse_ft`` is its exact inverse.  Since
``h * dxi * M = 2 pi``, Parseval holds exactly:
``sum |f|^2 h^N = sum |F|^2 dxi^N``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import GridTooCoarse, TagMismatch

PHYSICAL = "physical"
FREQUENCY = "frequency"


@dataclass(frozen=True)
class SpectralGrid:
    """Box ``[-L, L)^N`` with ``M`` nodes per axis.

    Parameters
    ----------
    dim : int
        Dimension, 2 or 3 (the radial module covers other ``N``).
    half_width : float
        ``L``.
    points : int
        ``M``, a power of two.
    offset : bool
        Shift the frequency lattice by half a cell.
    """

    dim: int
    half_width: float
    points: int
    offset: bool = True

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"full grids support N in {{2, 3}}, got {self.dim}")
        m = int(self.points)
        if m < 4 or m & (m - 1):
            raise ValueError(f"points per axis must be a power of two >= 4, got {self.points}")
        if not self.half_width > 0:
            raise ValueError("half width must be positive")
        object.__setattr__(self, "points", m)
        object.__setattr__(self, "half_width", float(self.half_width))

    # geometry --------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def dxi(self) -> float:
        return math.pi / self.half_width

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def nyquist(self) -> float:
        """``pi M / (2L)``."""
        return 0.5 * self.points * self.dxi

    @property
    def shift(self) -> float:
        return 0.5 if self.offset else 0.0

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.points)

    @property
    def xi(self) -> np.ndarray:
        k = np.fft.fftfreq(self.points, d=1.0 / self.points)
        return self.dxi * (k + self.shift)

    def axis(self, values: np.ndarray, d: int) -> np.ndarray:
        """Reshape a 1D array to broadcast along axis ``d``."""
        shape = [1] * self.dim
        shape[d] = self.points
        return values.reshape(shape)

    def coords(self) -> list[np.ndarray]:
        """Sparse (broadcastable) physical coordinates."""
        return [self.axis(self.x, d) for d in range(self.dim)]

    def freqs(self) -> list[np.ndarray]:
        return [self.axis(self.xi, d) for d in range(self.dim)]

    # radial bookkeeping: integer keys make radial evaluation a table lookup ---------
    @cached_property
    def _freq_keys(self) -> np.ndarray:
        k = np.fft.fftfreq(self.points, d=1.0 / self.points).astype(np.int64)
        o2 = 1 if self.offset else 0
        odd = (2 * k + o2) ** 2
        key = np.zeros(self.shape, dtype=np.int32)
        for d in range(self.dim):
            key += self.axis(odd, d).astype(np.int32)
        key.setflags(write=False)
        return key

    @cached_property
    def _space_keys(self) -> np.ndarray:
        j = np.arange(self.points, dtype=np.int64) - self.points // 2
        key = np.zeros(self.shape, dtype=np.int32)
        for d in range(self.dim):
            key += self.axis(j * j, d).astype(np.int32)
        key.setflags(write=False)
        return key

    def radial_eval(self, func, domain: str = FREQUENCY, dtype=float) -> np.ndarray:
        """Evaluate ``func(radius)`` on every node via the distinct radii only."""
        if domain == FREQUENCY:
            keys, unit = self._freq_keys, 0.5 * self.dxi
        else:
            keys, unit = self._space_keys, self.h
        present = np.zeros(int(keys.max()) + 1, dtype=bool)
        present[keys.ravel()] = True
        uniq = np.flatnonzero(present)
        table = np.zeros(present.size, dtype=dtype)
        table[uniq] = func(np.sqrt(uniq.astype(float)) * unit)
        return table[keys]

    def rho2(self) -> np.ndarray:
        """``|xi|^2`` on the lattice."""
        return self._freq_keys * (0.5 * self.dxi) ** 2

    def r2(self) -> np.ndarray:
        """``|x|^2`` on the nodes."""
        return self._space_keys * self.h**2

    def radius(self) -> np.ndarray:
        return np.sqrt(self.r2())

    def ball(self, fraction: float) -> np.ndarray:
        """Mask of the centred ball of radius ``fraction * L``."""
        return self.r2() <= (fraction * self.half_width) ** 2

    def shell_clearance(self, a_values) -> float:
        """``min_k ||xi_k|^2 - a|`` over the positive ``a`` supplied (inf if none)."""
        keys = self._freq_keys
        present = np.zeros(int(keys.max()) + 1, dtype=bool)
        present[keys.ravel()] = True
        rho2 = np.flatnonzero(present) * (0.5 * self.dxi) ** 2
        out = math.inf
        for a in a_values:
            if a > 0:
                out = min(out, float(np.min(np.abs(rho2 - a))))
        return out

    def describe(self) -> dict:
        return {
            "N": self.dim,
            "M": self.points,
            "L": self.half_width,
            "offset": self.offset,
            "h": self.h,
            "nyquist": self.nyquist,
        }


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function with its grid and domain tag."""

    grid: SpectralGrid
    values: np.ndarray
    domain: str = PHYSICAL

    def __post_init__(self):
        if self.domain not in (PHYSICAL, FREQUENCY):
            raise ValueError(f"unknown domain tag {self.domain!r}")
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    def like(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.domain)

    @property
    def real(self) -> "Field":
        return self.like(np.real(self.values).copy())

    def conj(self) -> "Field":
        return self.like(np.conj(self.values))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def _require(f: Field, domain: str):
    if f.domain != domain:
        raise TagMismatch(f"expected a {domain} field, got {f.domain}")


def _phases(grid: SpectralGrid):
    m = grid.points
    pre = np.exp(-1j * math.pi * grid.shift * 2.0 * np.arange(m) / m)
    k = np.fft.fftfreq(m, d=1.0 / m)
    post = np.exp(1j * math.pi * (k + grid.shift))
    return pre, post


def _apply_phases(arr: np.ndarray, grid: SpectralGrid, vec: np.ndarray):
    for d in range(grid.dim):
        arr *= grid.axis(vec, d)


def forward_ft(f: Field) -> Field:
    """Midpoint-rule transform with the ``(2 pi)^{-N/2}`` normalisation."""
    _require(f, PHYSICAL)
    g = f.grid
    pre, post = _phases(g)
    work = np.array(f.values, dtype=complex)
    if g.offset:
        _apply_phases(work, g, pre)
    work = scipy.fft.fftn(work, overwrite_x=True, workers=1)
    _apply_phases(work, g, post)
    work *= g.h**g.dim * (2.0 * math.pi) ** (-g.dim / 2.0)
    return Field(g, work, FREQUENCY)


def inverse_ft(F: Field) -> Field:
    """Exact inverse of :func:`forward_ft` on the lattice."""
    _require(F, FREQUENCY)
    g = F.grid
    pre, post = _phases(g)
    work = np.array(F.values, dtype=complex)
    _apply_phases(work, g, post.conj())
    work = scipy.fft.ifftn(work, overwrite_x=True, workers=1)
    if g.offset:
        _apply_phases(work, g, pre.conj())
    work *= (g.dxi * g.points) ** g.dim * (2.0 * math.pi) ** (-g.dim / 2.0)
    return Field(g, work, PHYSICAL)


def apply_multiplier(f: Field, multiplier: np.ndarray, real: bool = False) -> Field:
    """``inverse_ft(m * forward_ft(f))``; the convolution with the kernel of ``m``."""
    F = forward_ft(f)
    F.values[...] *= multiplier
    out = inverse_ft(F)
    if real:
        return out.like(out.values.real.copy())
    return out


def inner(f: Field, g: Field) -> complex:
    """Midpoint ``int f g dx`` (bilinear, no conjugation)."""
    return complex(np.vdot(np.conj(f.values), g.values)) * f.grid.cell_volume


def lp_norm(f: Field, p: float, window: np.ndarray | None = None) -> float:
    """``(sum |f|^p h^N)^{1/p}``, or the max norm for ``p = inf``.

    ``window`` is an optional boolean mask restricting the sum.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    vals = np.abs(f.values if isinstance(f, Field) else np.asarray(f))
    if window is not None:
        vals = vals[window]
    if vals.size == 0:
        return 0.0
    if math.isinf(p):
        return float(vals.max())
    cell = f.grid.cell_volume if isinstance(f, Field) else 1.0
    if p == 2:
        return float(math.sqrt(np.sum(vals * vals) * cell))
    scale = vals.max()
    if scale == 0:
        return 0.0
    return float(scale * (np.sum((vals / scale) ** p) * cell) ** (1.0 / p))


def power_map(v, s: float):
    """Pointwise ``|v|^{s-2} v`` with value 0 at ``v = 0``."""
    if not s > 1:
        raise ValueError("exponent must exceed 1")
    vals = v.values if isinstance(v, Field) else np.asarray(v)
    mag = np.abs(vals)
    nz = mag > 0
    out = np.zeros_like(vals, dtype=np.result_type(vals, float))
    out[nz] = mag[nz] ** (s - 2.0) * vals[nz]
    if isinstance(v, Field):
        return v.like(out)
    return out


def band_limit_filter(grid: SpectralGrid, fraction: float, width: float = 0.3) -> np.ndarray:
    """Smooth radial low-pass multiplier: 1 below ``fraction*Nyquist``, 0 above ``(1+width)`` times that."""
    from .kernels import smoothstep

    rho0 = fraction * grid.nyquist
    return grid.radial_eval(lambda rho: 1.0 - np.asarray(smoothstep((rho - rho0) / (width * rho0))))


def mollified_delta(grid: SpectralGrid, fraction: float = 0.8, width: float = 0.3) -> Field:
    """Band-limited approximation of the Dirac mass at the origin."""
    mult = band_limit_filter(grid, fraction, width) * (2.0 * math.pi) ** (-grid.dim / 2.0)
    out = inverse_ft(Field(grid, mult.astype(complex), FREQUENCY))
    return out.like(out.values.real.copy())


def require_resolved(f: Field, fraction: float = 0.9, tol: float = 1e-10):
    """Raise GridTooCoarse if ``f`` carries spectral energy near the Nyquist radius."""
    F = forward_ft(f).values
    w = np.abs(F) ** 2
    total = w.sum()
    if total == 0:
        return
    rho2 = f.grid.rho2()
    tail = w[rho2 > (fraction * f.grid.nyquist) ** 2].sum()
    if tail > tol * total:
        raise GridTooCoarse(f"spectral energy fraction {tail / total:.2e} beyond {fraction} Nyquist")


# --- import / export ---------------------------------------------------------------

_MAGIC = b"QHF1"
_HEADER = struct.Struct("<4sHHIdBB")


def write_field(path, f: Field) -> None:
    """Binary container: header (dim, M, L, offset, domain) + complex128 values."""
    g = f.grid
    head = _HEADER.pack(_MAGIC, 1, g.dim, g.points, g.half_width, int(g.offset), int(f.domain == FREQUENCY))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def read_field(path) -> Field:
    data = Path(path).read_bytes()
    magic, version, dim, m, L, offset, dom = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a field container")
    grid = SpectralGrid(dim, L, m, bool(offset))
    vals = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(grid.shape).copy()
    return Field(grid, vals, FREQUENCY if dom else PHYSICAL)


def field_to_json(f: Field) -> str:
    g = f.grid
    vals = np.asarray(f.values, dtype=complex).ravel()
    return json.dumps(
        {
            "dim": g.dim,
            "M": g.points,
            "L": g.half_width,
            "offset": g.offset,
            "domain": f.domain,
            "re": vals.real.tolist(),
            "im": vals.imag.tolist(),
        }
    )


def field_from_json(text: str) -> Field:
    d = json.loads(text)
    grid = SpectralGrid(d["dim"], d["L"], d["M"], d["offset"])
    vals = (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(grid.shape)
    return Field(grid, vals, d["domain"])
