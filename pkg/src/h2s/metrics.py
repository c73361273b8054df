"""Smoothed marginal densities and relative L1/L2 distances between them.

Densities are Gaussian-kernel estimates with Silverman's rule-of-thumb
bandwidth, evaluated on a uniform grid and renormalized by the trapezoid
rule.  Distances integrate over a shared grid spanning both supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import InputError

DEFAULT_GRID = 512
MAX_SHARED_GRID = 1 << 16
KERNEL_CUTOFF = 8.0
_SQRT_2PI = np.sqrt(2.0 * np.pi)
_GRID_BLOCK = 16
_SAMPLE_BLOCK = 65536


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise InputError("grid and values must be equal-length 1-D arrays (>= 2 points)")
        if np.any(np.diff(g) <= 0):
            raise InputError("grid must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InputError("density values must be finite and non-negative")
        if not self.bandwidth > 0:
            raise InputError(f"bandwidth must be > 0, got {self.bandwidth}")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(trapezoid(self.values, self.grid))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    # A zero (or float-noise) IQR, e.g. from heavy ties, falls back to the SD.
    if not spread > 1e-12 * sd:
        spread = sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(samples, grid_size: int = DEFAULT_GRID, span: tuple[float, float] | None = None) -> DensityEstimate:
    """Gaussian KDE on ``grid_size`` points over ``[min - 3h, max + 3h]`` (or ``span``).

    Samples are sorted before summation so the result does not depend on
    their order.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if x.size < 2 or not np.all(np.isfinite(x)):
        raise InputError("kde needs at least two finite samples")
    if x[0] == x[-1]:
        raise InputError("kde of constant samples is degenerate (bandwidth 0)")
    if grid_size < 2:
        raise InputError(f"grid_size must be >= 2, got {grid_size}")
    h = silverman_bandwidth(x)
    lo, hi = span if span is not None else (x[0] - 3.0 * h, x[-1] + 3.0 * h)
    grid = np.linspace(lo, hi, grid_size)
    dens = np.zeros(grid_size)
    # Kernel terms beyond KERNEL_CUTOFF bandwidths are below exp(-32) and skipped.
    reach = KERNEL_CUTOFF * h
    for b in range(0, grid_size, _GRID_BLOCK):
        g = grid[b : b + _GRID_BLOCK]
        i0, i1 = np.searchsorted(x, [g[0] - reach, g[-1] + reach])
        for s in range(i0, i1, _SAMPLE_BLOCK):
            z = (g[:, None] - x[None, s : min(s + _SAMPLE_BLOCK, i1)]) / h
            dens[b : b + _GRID_BLOCK] += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= x.size * h * _SQRT_2PI
    area = trapezoid(dens, grid)
    if not area > 0:
        raise InputError("kde has no mass on the requested span")
    return DensityEstimate(grid, dens / area, float(h))


def kde_span(*sample_sets) -> tuple[float, float]:
    """Union of the ``[min - 3h, max + 3h]`` spans of several sample sets."""
    lo, hi = np.inf, -np.inf
    for s in sample_sets:
        s = np.asarray(s, dtype=np.float64)
        h = silverman_bandwidth(s)
        lo, hi = min(lo, s.min() - 3 * h), max(hi, s.max() + 3 * h)
    return float(lo), float(hi)


def shared_grid(p: DensityEstimate, q: DensityEstimate):
    """Both densities on one grid over the union span, each renormalized to 1."""
    if p.grid.shape == q.grid.shape and np.array_equal(p.grid, q.grid):
        grid, pv, qv = p.grid, p.values, q.values
    else:
        lo = min(p.grid[0], q.grid[0])
        hi = max(p.grid[-1], q.grid[-1])
        finest = min(np.diff(p.grid).min(), np.diff(q.grid).min())
        size = max(p.grid.size, q.grid.size, int(np.ceil((hi - lo) / finest)) + 1)
        grid = np.linspace(lo, hi, min(size, MAX_SHARED_GRID))
        pv = np.interp(grid, p.grid, p.values, left=0.0, right=0.0)
        qv = np.interp(grid, q.grid, q.values, left=0.0, right=0.0)
    return grid, pv / trapezoid(pv, grid), qv / trapezoid(qv, grid)


def l1_terms(p: DensityEstimate, q: DensityEstimate) -> tuple[float, float]:
    grid, pv, qv = shared_grid(p, q)
    return float(trapezoid(np.abs(pv - qv), grid)), float(trapezoid(np.abs(pv), grid))


def l2_terms(p: DensityEstimate, q: DensityEstimate) -> tuple[float, float]:
    grid, pv, qv = shared_grid(p, q)
    d = pv - qv
    return float(np.sqrt(trapezoid(d * d, grid))), float(np.sqrt(trapezoid(pv * pv, grid)))


def relative_l1(p: DensityEstimate, q: DensityEstimate) -> float:
    """Integrated absolute difference relative to the L1 norm of ``p`` (the reference)."""
    num, den = l1_terms(p, q)
    return num / den


def relative_l2(p: DensityEstimate, q: DensityEstimate) -> float:
    num, den = l2_terms(p, q)
    return num / den
