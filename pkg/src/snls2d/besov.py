"""Weighted Littlewood-Paley analysis on the periodic grid.

Dyadic blocks are smooth radial profiles anchored at k0 = 8 fundamental
modes: block -1 caps the ball |k| <= (4/3) k0, block j >= 0 covers the
annulus (3/4) 2^j k0 <= |k| <= (8/3) 2^j k0, and the last block absorbs
the remaining spectral tail up to Nyquist so the family sums to one
exactly on the whole grid.  On top of the blocks sit the weighted norm
families (Besov, Bessel-potential Sobolev, Holder-Zygmund, plain L^p,
and a chunked local Holder norm over expanding boxes) plus the request
arithmetic used by the inequality harness.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.fft as _fft

from .grid import ComplexField, Grid2D, RealField, load_field, weight_field
from .noise import smoothstep7

__all__ = [
    "LPPartition",
    "NormRequest",
    "NormValue",
    "build_partition",
    "lp_block",
    "norm",
    "holder_chunked",
    "chunk_stencil",
    "random_band_limited",
    "dual_request",
    "interpolate_requests",
    "product_request",
    "norm_batch",
]

INF = float("inf")

FAMILIES = ("besov", "sobolev", "holder", "lp", "holder_chunked")


def _chi(rho: np.ndarray) -> np.ndarray:
    """Radial cap profile: 1 on [0, 3/4], smoothstep down to 0 at 4/3."""
    out = 1.0 - smoothstep7((rho - 0.75) / (4.0 / 3.0 - 0.75))
    out[rho >= 4.0 / 3.0] = 0.0
    out[rho <= 0.75] = 1.0
    return out


@dataclass(frozen=True)
class LPPartition:
    """Dyadic spectral partition; blocks[i] is the multiplier for j = i - 1."""

    grid: Grid2D
    k0: float
    j_max: int
    blocks: tuple

    def multiplier(self, j: int) -> np.ndarray:
        if not -1 <= j <= self.j_max:
            raise IndexError(f"block index {j} outside [-1, {self.j_max}]")
        return self.blocks[j + 1]

    @property
    def indices(self) -> range:
        return range(-1, self.j_max + 1)


def build_partition(grid: Grid2D) -> LPPartition:
    k0 = 8.0 * np.pi / grid.L  # 8 fundamental modes
    j_max = int(math.floor(math.log2(grid.kmax))) - 1
    if j_max < 1:
        raise ValueError(
            f"grid too coarse for a dyadic decomposition: needs at least 3 "
            f"blocks, k_max = {grid.kmax:.3g} gives j_max = {j_max}"
        )
    kk = grid.kmag
    blocks = [_chi(kk / k0)]
    for j in range(j_max):
        blocks.append(_chi(kk / (2.0 ** (j + 1) * k0)) - _chi(kk / (2.0**j * k0)))
    # last block keeps everything the lower blocks released, up to Nyquist
    blocks.append(1.0 - _chi(kk / (2.0**j_max * k0)))
    for b in blocks:
        b.setflags(write=False)
    return LPPartition(grid=grid, k0=k0, j_max=j_max, blocks=tuple(blocks))


def lp_block(f, j: int, partition: LPPartition):
    """Project a field onto dyadic block j."""
    out = _fft.ifft2(f.spectrum * partition.multiplier(j))
    if isinstance(f, RealField):
        return RealField(f.grid, out.real, label=f"block{j}({f.label})")
    return ComplexField(f.grid, out, label=f"block{j}({f.label})")


# ---------------------------------------------------------------------------
# norm requests


@dataclass(frozen=True)
class NormRequest:
    """One weighted norm: family, regularity, integrabilities, weight."""

    family: str
    alpha: float = 0.0
    p: float = 2.0
    q: float = 2.0
    mu: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown norm family {self.family!r}")
        if self.family == "sobolev" and (self.p, self.q) != (2.0, 2.0):
            raise ValueError("sobolev norms force p = q = 2")
        if self.family == "holder" and (self.p, self.q) != (INF, INF):
            raise ValueError("holder norms force p = q = inf")
        if self.family == "lp" and self.alpha != 0.0:
            raise ValueError("plain lp norms take alpha = 0")
        if self.family == "holder_chunked" and not 0.0 < self.alpha < 1.0:
            raise ValueError("chunked holder norms need alpha in (0, 1)")
        for name, e in (("p", self.p), ("q", self.q)):
            if not (e >= 1.0):
                raise ValueError(f"exponent {name} must be >= 1 or inf, got {e}")


def holder_request(alpha: float, mu: float = 0.0) -> NormRequest:
    return NormRequest(family="holder", alpha=alpha, p=INF, q=INF, mu=mu)


def sobolev_request(alpha: float, mu: float = 0.0) -> NormRequest:
    return NormRequest(family="sobolev", alpha=alpha, p=2.0, q=2.0, mu=mu)


@dataclass(frozen=True)
class NormValue:
    value: float
    per_block: tuple = ()


def _weighted_lp(abs_vals: np.ndarray, grid: Grid2D, p: float, weight) -> float:
    wa = abs_vals if weight is None else abs_vals * weight
    if p == INF:
        return float(wa.max())
    return float((grid.h**2 * (wa**p).sum()) ** (1.0 / p))


def _lq(entries: np.ndarray, q: float) -> float:
    if q == INF:
        return float(entries.max()) if entries.size else 0.0
    return float((entries**q).sum() ** (1.0 / q))


def norm(f, req: NormRequest, partition: LPPartition | None = None) -> NormValue:
    """Evaluate one weighted norm of a grid field.

    besov/holder run through the dyadic blocks; sobolev is the exact
    Bessel-potential route <k>^alpha (so H^0 with no weight is the plain
    L^2 norm to round-off); lp skips the decomposition entirely.
    """
    grid = f.grid
    weight = None
    if req.mu != 0.0:
        weight = weight_field(grid, req.mu).values

    if req.family == "lp":
        return NormValue(_weighted_lp(np.abs(f.values), grid, req.p, weight))

    if req.family == "sobolev":
        bessel = (1.0 + grid.k2) ** (req.alpha / 2.0)
        vals = _fft.ifft2(f.spectrum * bessel)
        return NormValue(_weighted_lp(np.abs(vals), grid, 2.0, weight))

    if req.family == "holder_chunked":
        value, chunks = _holder_chunked_impl(f, req.alpha, req.mu)
        return NormValue(value, per_block=tuple(chunks))

    # besov / holder: dyadic route
    if partition is None:
        partition = build_partition(grid)
    entries = []
    for j in partition.indices:
        block_vals = np.abs(_fft.ifft2(f.spectrum * partition.multiplier(j)))
        entries.append(2.0 ** (j * req.alpha) * _weighted_lp(block_vals, grid, req.p, weight))
    entries = np.asarray(entries)
    return NormValue(_lq(entries, req.q), per_block=tuple(entries))


# ---------------------------------------------------------------------------
# chunked local Holder norm


def chunk_stencil(grid: Grid2D) -> tuple:
    """Deterministic offset stencil for the local Holder quotient.

    Axis and diagonal directions at up to 12 geometrically spaced grid
    magnitudes, every offset no longer than 1 in physical length, at most
    48 offsets total.
    """
    m_axis = int(math.floor(1.0 / grid.h))
    m_diag = int(math.floor(1.0 / (grid.h * math.sqrt(2.0))))
    if m_axis < 1:
        raise ValueError(f"grid spacing h={grid.h} too coarse for unit offsets")
    mags = sorted(set(int(round(m)) for m in np.geomspace(1, m_axis, 12)))
    offsets = []
    for m in mags:
        offsets.append((m, 0))
        offsets.append((0, m))
        if m <= m_diag:
            offsets.append((m, m))
            offsets.append((m, -m))
    return tuple(offsets)


def _holder_chunked_impl(f, alpha: float, mu: float):
    grid = f.grid
    n_boxes = int(math.floor(grid.L))
    if n_boxes < 1:
        raise ValueError(f"box half-width L={grid.L} leaves no unit chunk")
    vals = f.values
    absf = np.abs(vals)
    linf = np.maximum(np.abs(grid.x)[:, None], np.abs(grid.x)[None, :])
    # smallest integer box containing each node; > n_boxes means none
    level = np.maximum(np.ceil(linf - 1e-12).astype(np.int64), 1)

    sup_acc = np.zeros(n_boxes + 2)
    inside = level <= n_boxes
    np.maximum.at(sup_acc, level[inside], absf[inside])

    quot_acc = np.zeros(n_boxes + 2)
    for a, b in chunk_stencil(grid):
        dist = grid.h * math.hypot(a, b)
        i0, i1 = max(0, -a), grid.N - max(0, a)
        j0, j1 = max(0, -b), grid.N - max(0, b)
        diff = np.abs(vals[i0 + a:i1 + a, j0 + b:j1 + b] - vals[i0:i1, j0:j1])
        diff /= dist**alpha
        lev = np.maximum(level[i0:i1, j0:j1], level[i0 + a:i1 + a, j0 + b:j1 + b])
        ok = lev <= n_boxes
        np.maximum.at(quot_acc, lev[ok], diff[ok])

    sup_run = np.maximum.accumulate(sup_acc[1:n_boxes + 1])
    quot_run = np.maximum.accumulate(quot_acc[1:n_boxes + 1])
    ks = np.arange(1, n_boxes + 1, dtype=float)
    chunks = (1.0 + ks**2) ** (mu / 2.0) * (sup_run + quot_run)
    return float(chunks.max()), chunks.tolist()


def holder_chunked(f, alpha: float, mu: float) -> float:
    """sup over k = 1..floor(L) of <k>^mu * ||f||_{C^alpha([-k,k]^2)}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"chunked holder norm needs alpha in (0, 1), got {alpha}")
    value, _ = _holder_chunked_impl(f, alpha, mu)
    return value


# ---------------------------------------------------------------------------
# request arithmetic for the inequality harness


def _inv(e: float) -> float:
    return 0.0 if e == INF else 1.0 / e


def _from_inv(r: float) -> float:
    return INF if r == 0.0 else 1.0 / r


def dual_request(req: NormRequest) -> NormRequest:
    """Parameters of the pairing partner: conjugate exponents, flipped signs."""
    return replace(
        req,
        alpha=-req.alpha,
        p=_from_inv(1.0 - _inv(req.p)),
        q=_from_inv(1.0 - _inv(req.q)),
        mu=-req.mu,
    )


def interpolate_requests(req0: NormRequest, req1: NormRequest, theta: float) -> NormRequest:
    """Parameter point (1-theta) req0 + theta req1 (harmonic in p, q)."""
    if req0.family != req1.family:
        raise ValueError("interpolation needs a single family")
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    mix = lambda a, b: (1.0 - theta) * a + theta * b
    return replace(
        req0,
        alpha=mix(req0.alpha, req1.alpha),
        p=_from_inv(mix(_inv(req0.p), _inv(req1.p))),
        q=_from_inv(mix(_inv(req0.q), _inv(req1.q))),
        mu=mix(req0.mu, req1.mu),
    )


def product_request(req1: NormRequest, req2: NormRequest) -> NormRequest:
    """Target space of a product: alpha = min, Holder exponents, summed weights."""
    for r in (req1, req2):
        if r.alpha <= 0.0:
            raise ValueError("multiplication harness needs positive regularity")
        if r.p < 2.0:
            raise ValueError("multiplication harness needs p >= 2")
        if r.p != r.q:
            raise ValueError("multiplication harness is stated for q = p")
    p = _from_inv(_inv(req1.p) + _inv(req2.p))
    return NormRequest(
        family="besov",
        alpha=min(req1.alpha, req2.alpha),
        p=p,
        q=p,
        mu=req1.mu + req2.mu,
    )


# ---------------------------------------------------------------------------
# random test fields and batch evaluation


def random_band_limited(
    grid: Grid2D,
    seed: int,
    decay: float = 1.5,
    band: float = 0.75,
    kind: str = "complex",
):
    """Seeded random field with spectrum confined to |k| <= band * k_max.

    Coefficients are complex Gaussians shaped by (1 + |k|/k0)^-decay, and
    the result is normalized to unit L^2 norm.  These are the shared test
    fields of the norm-inequality harness.
    """
    rng = np.random.default_rng(seed)
    spec = rng.standard_normal((grid.N, grid.N)) + 1j * rng.standard_normal(
        (grid.N, grid.N)
    )
    k0 = 8.0 * np.pi / grid.L
    spec *= (1.0 + grid.kmag / k0) ** (-decay)
    spec[grid.kmag > band * grid.kmax] = 0.0
    vals = _fft.ifft2(spec)
    if kind == "real":
        vals = vals.real
    elif kind != "complex":
        raise ValueError(f"kind must be real or complex, got {kind!r}")
    l2 = math.sqrt(float(grid.h**2 * (np.abs(vals) ** 2).sum()))
    f = vals / l2
    if kind == "real":
        return RealField(grid, f, label=f"rand[{seed}]")
    return ComplexField(grid, f, label=f"rand[{seed}]")


def norm_batch(manifest, out_csv: str | Path, grid: Grid2D | None = None) -> Path:
    """Evaluate norms listed in a manifest and write the batch CSV.

    The manifest is a path to a JSON list (or the list itself) of entries
    {"field": <file stem>, "norms": [{family, alpha, p, q, mu}, ...]};
    exponents may be the string "inf".  Output columns:
    field_label, family, alpha, p, q, mu, value.
    """
    if isinstance(manifest, (str, Path)):
        manifest = json.loads(Path(manifest).read_text())
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    partitions: dict = {}
    rows = []
    for entry in manifest:
        f = load_field(entry["field"], grid=grid)
        key = (f.grid.L, f.grid.N)
        if key not in partitions:
            partitions[key] = build_partition(f.grid)
        for spec in entry["norms"]:
            req = NormRequest(
                family=spec["family"],
                alpha=float(spec.get("alpha", 0.0)),
                p=float(spec.get("p", 2.0)),
                q=float(spec.get("q", 2.0)),
                mu=float(spec.get("mu", 0.0)),
            )
            val = norm(f, req, partitions[key]).value
            rows.append(
                [f.label, req.family, req.alpha, req.p, req.q, req.mu, val]
            )
    with out_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field_label", "family", "alpha", "p", "q", "mu", "value"])
        writer.writerows(rows)
    return out_csv
