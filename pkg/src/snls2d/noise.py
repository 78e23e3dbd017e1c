"""Spatial white noise and its renormalized smoothing pipeline.

The chain built here, all on one periodic grid, is

    xi  ->  xi_eps = rho_eps * xi  ->  Y_eps = G * xi_eps
        ->  grad Y_eps, wick = |grad Y_eps|^2 - c_eps,
            phi * xi_eps, pot = wick - phi * xi_eps

where rho_eps is a compactly supported bump at scale eps, G is a
truncated log kernel, and phi is the smooth spectral correction defined
so that Lap G = delta + phi holds exactly on the grid.  c_eps is the
deterministic stationary variance of |grad Y_eps| and diverges like
|log eps|/(2 pi); subtracting it is what keeps the potential meaningful
as eps shrinks.

Seeds fully determine every field: the same (seed, eps, grid) regenerate
bit-identical data, and no global RNG state is touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import (
    ComplexField,
    Grid2D,
    RealField,
    apply_multiplier,
    load_field,
    phys_spectrum,
    save_field,
)

__all__ = [
    "NoiseRealization",
    "Mollifier",
    "GreensKernel",
    "NoiseBundle",
    "sample_white_noise",
    "build_mollifier",
    "build_greens_kernel",
    "smooth_correction_field",
    "renorm_constant",
    "build_bundle",
    "bundle_residual",
    "exp_Y",
    "save_bundle",
    "load_bundle",
]

EXP_GUARD = 700.0  # |a * Y| beyond this would overflow float64


def smoothstep7(t: np.ndarray) -> np.ndarray:
    """Degree-7 smoothstep: 0 -> 1 on [0, 1] with three vanishing derivatives.

    C^3 at both ends, which is enough margin for the kernel and block
    profiles built on top of it.
    """
    t = np.clip(t, 0.0, 1.0)
    return t**4 * (35.0 - 84.0 * t + 70.0 * t**2 - 20.0 * t**3)


@dataclass(frozen=True)
class NoiseRealization:
    """One draw of pointwise white noise, variance 1/h^2 per node."""

    seed: int
    xi: RealField

    @property
    def grid(self) -> Grid2D:
        return self.xi.grid


def sample_white_noise(grid: Grid2D, seed: int) -> NoiseRealization:
    """Sample i.i.d. N(0, 1/h^2) noise; the seed pins every bit.

    The 1/h^2 variance makes the pairing h^2 * sum(xi * f) an honest
    white-noise pairing: its variance is the L^2 norm of f.
    """
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((grid.N, grid.N)) / grid.h
    return NoiseRealization(seed=seed, xi=RealField(grid, vals, label=f"xi[{seed}]"))


# ---------------------------------------------------------------------------
# mollifier


@dataclass(frozen=True)
class Mollifier:
    """Bump rho_eps = eps^-2 rho(x/eps), normalized to exact unit grid mass."""

    grid: Grid2D
    eps: float
    field: RealField
    spectrum: np.ndarray  # physical-convention transform, rho_hat(0) = 1

    def __post_init__(self) -> None:
        self.spectrum.setflags(write=False)


def build_mollifier(grid: Grid2D, eps: float) -> Mollifier:
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"mollifier scale must lie in (0, 1], got eps={eps}")
    if eps < 2.0 * grid.h:
        raise ValueError(
            f"mollifier scale eps={eps} is below the resolvable limit "
            f"2h={2 * grid.h}; refine the grid or enlarge eps"
        )
    r2 = grid.radius_sq() / eps**2
    vals = np.zeros((grid.N, grid.N))
    inside = r2 < 1.0
    vals[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    vals /= grid.h**2 * vals.sum()
    f = RealField(grid, vals, label=f"rho[{eps}]")
    spec = phys_spectrum(f)
    if np.abs(spec.imag).max() > 1e-10 * max(1.0, np.abs(spec.real).max()):
        raise AssertionError("mollifier transform should be real up to round-off")
    return Mollifier(grid=grid, eps=eps, field=f, spectrum=np.ascontiguousarray(spec.real))


# ---------------------------------------------------------------------------
# truncated log kernel


@dataclass(frozen=True)
class GreensKernel:
    """Truncated log kernel G with its exact spectral correction phi.

    g_hat is the physical-convention transform of the sampled G; phi_hat
    is defined as -|k|^2 g_hat - 1, which makes Lap G = delta + phi an
    identity of grid fields rather than an approximation.
    """

    grid: Grid2D
    field: RealField
    g_hat: np.ndarray
    phi_hat: np.ndarray

    def __post_init__(self) -> None:
        self.g_hat.setflags(write=False)
        self.phi_hat.setflags(write=False)

    @property
    def phi(self) -> RealField:
        """The smooth correction as a grid field (for inspection/tests)."""
        from .grid import _alternating_phase
        import scipy.fft as _fft

        spec = self.phi_hat * _alternating_phase(self.grid.N) / self.grid.h**2
        return RealField(self.grid, _fft.ifft2(spec).real, label="phi")


def log_cell_average(h: float) -> float:
    """Exact mean of log|x| over the h-cell centered at the origin.

    Octant decomposition of the square integral gives
    log(h/2) + (log 2)/2 + pi/4 - 3/2 in closed form.
    """
    return np.log(h / 2.0) + 0.5 * np.log(2.0) + np.pi / 4.0 - 1.5


def build_greens_kernel(grid: Grid2D) -> GreensKernel:
    if grid.L < 2.0:
        raise ValueError(
            f"kernel support needs margin inside the box: L >= 2 required, got L={grid.L}"
        )
    r = np.sqrt(grid.radius_sq())
    with np.errstate(divide="ignore"):
        logr = np.log(r)
    i0 = grid.N // 2
    logr[i0, i0] = log_cell_average(grid.h)
    # radial cutoff: 1 on [0, 1/4], smoothstep down to 0 at 1/2
    eta = 1.0 - smoothstep7((r - 0.25) / 0.25)
    eta[r >= 0.5] = 0.0
    vals = eta * logr / (2.0 * np.pi)
    vals[r >= 0.5] = 0.0
    f = RealField(grid, vals, label="G")
    spec = phys_spectrum(f)
    if np.abs(spec.imag).max() > 1e-10 * max(1.0, np.abs(spec.real).max()):
        raise AssertionError("kernel transform should be real up to round-off")
    g_hat = np.ascontiguousarray(spec.real)
    phi_hat = -grid.k2 * g_hat - 1.0
    return GreensKernel(grid=grid, field=f, g_hat=g_hat, phi_hat=np.ascontiguousarray(phi_hat))


def smooth_correction_field(grid: Grid2D) -> RealField:
    """The smooth part of Lap G, sampled from its closed radial form.

    With G = eta(r) log(r) / (2 pi), away from the origin

        Lap G = (log(r) (eta'' + eta'/r) + 2 eta'/r) / (2 pi),

    supported on the cutoff annulus 1/4 <= r <= 1/2 where eta falls from
    1 to 0, and integrating to exactly -1.  This is the continuum
    correction itself.  It differs from the kernel's spectral phi_hat
    (defined so that Lap G = delta + phi holds exactly on the grid) by a
    high-frequency sampling artifact: the exact-identity multiplier
    carries O(1) content near the Nyquist shell, harmless in the solver
    algebra but amplified when convolved against white noise, so
    convergence studies of the smooth term must use this field.
    """
    r = np.sqrt(grid.radius_sq())
    t = (r - 0.25) / 0.25
    inside = (t > 0.0) & (t < 1.0)
    tt = t[inside]
    rr = r[inside]
    # eta(r) = 1 - s7(t), t = (r - 1/4) / (1/4); chain rule gives the 4s
    d1 = -4.0 * 140.0 * tt**3 * (1.0 - tt) ** 3
    d2 = -16.0 * 420.0 * tt**2 * (1.0 - tt) ** 2 * (1.0 - 2.0 * tt)
    vals = np.zeros((grid.N, grid.N))
    vals[inside] = (np.log(rr) * (d2 + d1 / rr) + 2.0 * d1 / rr) / (2.0 * np.pi)
    return RealField(grid, vals, label="phi_smooth")


# ---------------------------------------------------------------------------
# renormalization constant and the bundle


def _gradient_multipliers(grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """(ik_x, ik_y) with the Nyquist line zeroed, as for any odd derivative."""
    n = grid.N
    mx = 1j * np.broadcast_to(grid.k[:, None], (n, n)).copy()
    my = 1j * np.broadcast_to(grid.k[None, :], (n, n)).copy()
    mx[n // 2, :] = 0.0
    my[:, n // 2] = 0.0
    return mx, my


def renorm_constant(kernel: GreensKernel, mollifier: Mollifier) -> float:
    """Exact stationary variance of |grad Y_eps| on the grid.

    For pointwise N(0, 1/h^2) noise pushed through the multiplier
    m(k) = ik G_hat(k) rho_hat(k), the per-node variance is
    sum_k |m(k)|^2 / (2L)^2, summing both gradient components with the
    same Nyquist convention as the spectral derivative.
    """
    grid = kernel.grid
    if mollifier.grid.N != grid.N or mollifier.grid.L != grid.L:
        raise ValueError("kernel and mollifier must share a grid")
    mx, my = _gradient_multipliers(grid)
    base = (kernel.g_hat * mollifier.spectrum) ** 2
    total = (np.abs(mx) ** 2 * base).sum() + (np.abs(my) ** 2 * base).sum()
    return float(total / (2.0 * grid.L) ** 2)


@dataclass(frozen=True)
class NoiseBundle:
    """Every noise-derived field the transformed equation needs, one seed."""

    grid: Grid2D
    seed: int
    eps: float
    c_eps: float
    xi: RealField
    xi_eps: RealField
    Y_eps: RealField
    gradY: tuple[RealField, RealField]
    wick: RealField
    phi_conv: RealField
    pot: RealField


def _real_from_multiplier(xi: RealField, mult: np.ndarray, label: str) -> RealField:
    out = apply_multiplier(xi, mult)
    scale = max(1.0, np.abs(out.real).max())
    leak = np.abs(out.imag).max()
    if leak > 1e-12 * scale:
        raise AssertionError(
            f"imaginary leakage {leak:.3e} in {label} exceeds round-off budget"
        )
    return RealField(xi.grid, out.real, label=label)


def build_bundle(
    grid: Grid2D,
    seed: int,
    eps: float,
    kernel: GreensKernel | None = None,
    mollifier: Mollifier | None = None,
    xi: RealField | None = None,
) -> NoiseBundle:
    """Assemble the full noise bundle for one (seed, eps).

    The kernel and mollifier can be passed in to amortize their
    construction across seeds; xi can be passed to share one noise draw
    across several eps (as the convergence studies require).
    """
    if kernel is None:
        kernel = build_greens_kernel(grid)
    if mollifier is None:
        mollifier = build_mollifier(grid, eps)
    elif mollifier.eps != eps:
        raise ValueError(f"mollifier was built for eps={mollifier.eps}, not {eps}")
    if xi is None:
        xi = sample_white_noise(grid, seed).xi
    tag = f"[s{seed},e{eps}]"
    smooth = mollifier.spectrum
    xi_eps = _real_from_multiplier(xi, smooth, f"xi_eps{tag}")
    y_mult = kernel.g_hat * smooth
    Y_eps = _real_from_multiplier(xi, y_mult, f"Y_eps{tag}")
    mx, my = _gradient_multipliers(grid)
    gx = _real_from_multiplier(xi, mx * y_mult, f"gradY_x{tag}")
    gy = _real_from_multiplier(xi, my * y_mult, f"gradY_y{tag}")
    c_eps = renorm_constant(kernel, mollifier)
    wick = RealField(
        grid, gx.values**2 + gy.values**2 - c_eps, label=f"wick{tag}"
    )
    phi_conv = _real_from_multiplier(xi, kernel.phi_hat * smooth, f"phi_conv{tag}")
    pot = RealField(grid, wick.values - phi_conv.values, label=f"pot{tag}")
    return NoiseBundle(
        grid=grid,
        seed=seed,
        eps=eps,
        c_eps=c_eps,
        xi=xi,
        xi_eps=xi_eps,
        Y_eps=Y_eps,
        gradY=(gx, gy),
        wick=wick,
        phi_conv=phi_conv,
        pot=pot,
    )


def bundle_residual(bundle: NoiseBundle) -> float:
    """Relative L^2 defect of Lap Y_eps = xi_eps + phi * xi_eps."""
    from .grid import laplacian

    lap = laplacian(bundle.Y_eps).values.real
    target = bundle.xi_eps.values + bundle.phi_conv.values
    num = np.sqrt(((lap - target) ** 2).sum())
    den = np.sqrt((target**2).sum())
    return float(num / den)


def exp_Y(Y: RealField, a: float = 1.0, label: str = "") -> RealField:
    """Pointwise exp(a Y); raises instead of silently overflowing."""
    arg = a * Y.values
    peak = np.abs(arg).max()
    if peak > EXP_GUARD:
        raise FloatingPointError(
            f"exp({a} * Y) would overflow: max |a Y| = {peak:.1f} > {EXP_GUARD}"
        )
    return RealField(Y.grid, np.exp(arg), label=label or f"exp({a}*Y)")


# ---------------------------------------------------------------------------
# persistence


# xi is replayed from the seed and pot from its pointwise identity, so
# six field files fully determine a bundle on disk
_BUNDLE_FIELDS = ("xi_eps", "Y_eps", "gradY_x", "gradY_y", "wick", "phi_conv")


def save_bundle(bundle: NoiseBundle, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": bundle.seed,
        "eps": bundle.eps,
        "c_eps": bundle.c_eps,
        "grid": {"L": bundle.grid.L, "N": bundle.grid.N},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    fields = dict(zip(_BUNDLE_FIELDS, (bundle.xi_eps, bundle.Y_eps,
                                       *bundle.gradY, bundle.wick, bundle.phi_conv)))
    for name, f in fields.items():
        save_field(f, directory / "fields" / name)
    return directory / "manifest.json"


def load_bundle(directory: str | Path) -> NoiseBundle:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    grid = Grid2D(L=float(manifest["grid"]["L"]), N=int(manifest["grid"]["N"]))
    seed = int(manifest["seed"])
    eps = float(manifest["eps"])
    loaded = {
        name: load_field(directory / "fields" / name, grid=grid)
        for name in _BUNDLE_FIELDS
    }
    pot = RealField(
        grid,
        loaded["wick"].values - loaded["phi_conv"].values,
        label=f"pot[s{seed},e{eps}]",
    )
    return NoiseBundle(
        grid=grid,
        seed=seed,
        eps=eps,
        c_eps=float(manifest["c_eps"]),
        xi=sample_white_noise(grid, seed).xi,
        xi_eps=loaded["xi_eps"],
        Y_eps=loaded["Y_eps"],
        gradY=(loaded["gradY_x"], loaded["gradY_y"]),
        wick=loaded["wick"],
        phi_conv=loaded["phi_conv"],
        pot=pot,
    )
