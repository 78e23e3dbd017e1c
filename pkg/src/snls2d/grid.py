"""Periodic grid, spectral calculus, quadrature, and field storage.

Everything downstream (noise construction, norms, the time integrator)
works on a uniform N x N grid covering the square [-L, L)^2 with periodic
wrap.  The transform convention is fixed here once: forward DFT is
unnormalized, the inverse carries 1/N^2, and all quadrature carries the
cell area h^2.  "Physical" Fourier coefficients, i.e. approximations of
integral(f(x) exp(-ik.x) dx), differ from the raw DFT by h^2 and an
alternating phase; :func:`convolve` and the kernel builders account for
that so that discrete convolutions approximate continuum ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as _fft

__all__ = [
    "Grid2D",
    "RealField",
    "ComplexField",
    "real_field",
    "complex_field",
    "weight_field",
    "spectral_derivative",
    "laplacian",
    "convolve",
    "apply_multiplier",
    "phys_spectrum",
    "integrate",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid on [-L, L)^2.

    Parameters
    ----------
    L : float
        Half-width of the box.  Coordinates are measured from the box
        center, so nodes run from -L to L - h.
    N : int
        Nodes per axis.  Must be a power of two, at least 16.

    Attributes
    ----------
    h : float
        Grid spacing 2L/N.
    x : ndarray, shape (N,)
        Node coordinates along one axis.
    k : ndarray, shape (N,)
        Wavenumbers (pi/L) * j for integer frequencies j in [-N/2, N/2),
        in FFT storage order.
    k2 : ndarray, shape (N, N)
        |k|^2 on the full spectral grid.
    kmag : ndarray, shape (N, N)
        |k| on the full spectral grid.
    """

    L: float
    N: int

    def __post_init__(self) -> None:
        if self.L <= 0:
            raise ValueError(f"box half-width L must be positive, got {self.L}")
        n = self.N
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"N must be a power of two >= 16, got {n}")
        h = 2.0 * self.L / n
        x = -self.L + h * np.arange(n)
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        kx = k[:, None]
        ky = k[None, :]
        k2 = kx**2 + ky**2
        for name, arr in (("x", x), ("k", k), ("k2", k2), ("kmag", np.sqrt(k2))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "h", h)

    @property
    def kmax(self) -> float:
        """Nyquist wavenumber pi*N/(2L)."""
        return np.pi * self.N / (2.0 * self.L)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays X, Y of shape (N, N), axis 0 along x."""
        return np.meshgrid(self.x, self.x, indexing="ij")

    def radius_sq(self) -> np.ndarray:
        """|x|^2 as an (N, N) array."""
        return self.x[:, None] ** 2 + self.x[None, :] ** 2

    def wavenumber(self, axis: int) -> np.ndarray:
        """Wavenumbers along one axis, broadcast to 2-D shape."""
        if axis == 0:
            return self.k[:, None]
        if axis == 1:
            return self.k[None, :]
        raise ValueError(f"axis must be 0 or 1, got {axis}")


def _as_grid_array(grid: Grid2D, values: np.ndarray, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != (grid.N, grid.N):
        raise ValueError(
            f"field shape {arr.shape} does not match grid ({grid.N}, {grid.N})"
        )
    arr = arr.copy(order="C")
    arr.setflags(write=False)
    return arr


class _FieldBase:
    """Shared behavior: immutable values plus a lazily cached spectrum."""

    __slots__ = ("grid", "values", "label", "_spectrum")

    def __init__(self, grid: Grid2D, values: np.ndarray, label: str = ""):
        self.grid = grid
        self.values = _as_grid_array(grid, values, self._dtype)
        self.label = label
        self._spectrum = None

    @property
    def spectrum(self) -> np.ndarray:
        """Unnormalized forward DFT of the values, cached."""
        if self._spectrum is None:
            spec = _fft.fft2(self.values)
            spec.setflags(write=False)
            self._spectrum = spec
        return self._spectrum

    def __repr__(self) -> str:
        tag = f" {self.label!r}" if self.label else ""
        return f"<{type(self).__name__}{tag} N={self.grid.N} L={self.grid.L}>"


class RealField(_FieldBase):
    _dtype = np.float64
    kind = "real"


class ComplexField(_FieldBase):
    _dtype = np.complex128
    kind = "complex"


def real_field(grid: Grid2D, values, label: str = "") -> RealField:
    return RealField(grid, values, label)


def complex_field(grid: Grid2D, values, label: str = "") -> ComplexField:
    return ComplexField(grid, values, label)


def weight_field(grid: Grid2D, mu: float) -> RealField:
    """Polynomial weight <x>^mu = (1 + |x|^2)^(mu/2) sampled on the grid."""
    w = (1.0 + grid.radius_sq()) ** (mu / 2.0)
    return RealField(grid, w, label=f"weight(mu={mu})")


def _field_like(grid: Grid2D, arr: np.ndarray, label: str = ""):
    if np.iscomplexobj(arr):
        return ComplexField(grid, arr, label)
    return RealField(grid, arr, label)


def apply_multiplier(f: _FieldBase, multiplier: np.ndarray) -> np.ndarray:
    """Inverse DFT of multiplier * spectrum; the raw ndarray, not a field.

    Multipliers are functions of the wavenumber evaluated on the spectral
    grid, so no extra normalization or phase enters here.
    """
    return _fft.ifft2(f.spectrum * multiplier)


def spectral_derivative(f: _FieldBase, axis: int, order: int = 1) -> ComplexField:
    """Partial derivative of given order along an axis, in spectral space.

    Odd orders zero the Nyquist mode on the differentiated axis (the
    (ik)^order multiplier is odd there and has no consistent sign); even
    orders keep it.
    """
    if order < 0:
        raise ValueError(f"derivative order must be nonnegative, got {order}")
    grid = f.grid
    mult = (1j * grid.wavenumber(axis)) ** order
    mult = np.broadcast_to(mult, (grid.N, grid.N)).copy()
    if order % 2 == 1:
        if axis == 0:
            mult[grid.N // 2, :] = 0.0
        else:
            mult[:, grid.N // 2] = 0.0
    out = apply_multiplier(f, mult)
    return ComplexField(grid, out, label=f"d{order}_{'xy'[axis]}({f.label})")


def laplacian(f: _FieldBase) -> ComplexField:
    """Spectral Laplacian (multiplier -|k|^2, Nyquist kept)."""
    out = apply_multiplier(f, -f.grid.k2)
    return ComplexField(f.grid, out, label=f"lap({f.label})")


def _alternating_phase(n: int) -> np.ndarray:
    s = np.ones(n)
    s[1::2] = -1.0
    return s[:, None] * s[None, :]


def phys_spectrum(f: _FieldBase) -> np.ndarray:
    """Continuum-style Fourier coefficients of a field on the grid modes.

    Equals h^2 exp(ik.(L, L)) DFT(values), the Riemann sum for
    integral(f exp(-ik.x)).  Pointwise multiplication by such a spectrum
    (via :func:`apply_multiplier`) is exactly :func:`convolve` with the
    underlying kernel, which is what the noise pipeline builds on.
    """
    return f.grid.h**2 * _alternating_phase(f.grid.N) * f.spectrum


def convolve(f: _FieldBase, g: _FieldBase, label: str = ""):
    """Periodic convolution approximating integral(f(y) g(x - y) dy).

    Both factors are sampled on the same centered grid; the h^2 quadrature
    weight and the centering phase (both kernels store x = 0 at index N/2)
    are folded into the spectral product.  Symmetric in its arguments.
    Real inputs give a real output; the imaginary round-off is dropped.
    """
    if f.grid is not g.grid and (f.grid.N != g.grid.N or f.grid.L != g.grid.L):
        raise ValueError("convolve requires both fields on the same grid")
    grid = f.grid
    spec = f.spectrum * g.spectrum * _alternating_phase(grid.N)
    out = grid.h**2 * _fft.ifft2(spec)
    if isinstance(f, RealField) and isinstance(g, RealField):
        return RealField(grid, out.real, label)
    return ComplexField(grid, out, label)


def integrate(f, mu: float = 0.0, grid: Grid2D | None = None):
    """Weighted box quadrature h^2 * sum(f * <x>^mu).

    Accepts a field or a raw (N, N) array (then ``grid`` is required).
    Returns float for real data, complex otherwise.
    """
    if isinstance(f, _FieldBase):
        grid = f.grid
        vals = f.values
    else:
        if grid is None:
            raise ValueError("integrate needs a grid when given a raw array")
        vals = np.asarray(f)
    if mu != 0.0:
        vals = vals * (1.0 + grid.radius_sq()) ** (mu / 2.0)
    total = grid.h**2 * vals.sum()
    return float(total) if not np.iscomplexobj(vals) else complex(total)


# ---------------------------------------------------------------------------
# field files: <stem>.bin payload + <stem>.json sidecar header


def save_field(f: _FieldBase, stem: str | Path) -> Path:
    """Write a field as little-endian float64 payload plus a JSON header.

    Real fields store row-major float64; complex fields store interleaved
    (re, im) float64 pairs.  Round-trips are bit-exact.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(f, RealField):
        payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
        kind = "real"
    else:
        payload = np.ascontiguousarray(f.values, dtype="<c16").tobytes()
        kind = "complex"
    stem.with_suffix(".bin").write_bytes(payload)
    header = {"N": f.grid.N, "L": f.grid.L, "kind": kind, "label": f.label}
    stem.with_suffix(".json").write_text(json.dumps(header, indent=1) + "\n")
    return stem.with_suffix(".bin")


def load_field(stem: str | Path, grid: Grid2D | None = None):
    """Read a field written by :func:`save_field`; header drives the grid."""
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    for key in ("N", "L", "kind", "label"):
        if key not in header:
            raise ValueError(f"field header {stem}.json is missing {key!r}")
    if grid is None:
        grid = Grid2D(L=float(header["L"]), N=int(header["N"]))
    elif grid.N != header["N"] or grid.L != header["L"]:
        raise ValueError("field header does not match the supplied grid")
    raw = stem.with_suffix(".bin").read_bytes()
    n = grid.N
    if header["kind"] == "real":
        vals = np.frombuffer(raw, dtype="<f8").reshape(n, n)
        return RealField(grid, vals, label=header["label"])
    if header["kind"] == "complex":
        vals = np.frombuffer(raw, dtype="<c16").reshape(n, n)
        return ComplexField(grid, vals, label=header["label"])
    raise ValueError(f"unknown field kind {header['kind']!r}")
