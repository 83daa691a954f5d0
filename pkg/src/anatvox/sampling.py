"""Probabilistic training-patch sampling driven by an interest mask.

The gain of centering a patch at voxel p is the truncated-Gaussian-weighted
count of interest voxels inside the patch-sized box around p. Because the
kernel covariance is diagonal, the full gain field factorizes into three 1D
passes; `gain_at_naive` keeps the direct triple-loop definition around as
the reference.

The gain field is turned into a probability map by an additive blend with
the uniform distribution followed by renormalization, organ- and
tumor-driven maps are mixed linearly, and centers are drawn by inverse-CDF
lookup over the flat z-major order with a seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Coord, VoxelGrid, coord_at, require_same_geometry, shifted

PSM_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PatchSpec:
    """Patch size in voxels (dz, dy, dx) plus the derived kernel geometry.

    The per-axis Gaussian variance is 0.1 * d. Set ``sigma_is_stddev`` to
    read 0.1 * d as a standard deviation instead (variance (0.1 d)^2).
    Truncation is the inclusive box |q - p| <= d // 2 per axis.
    """

    size: tuple[int, int, int]
    sigma_is_stddev: bool = False

    def __post_init__(self):
        size = tuple(int(s) for s in self.size)
        if len(size) != 3 or any(s < 1 for s in size):
            raise ValueError(f"patch size must be 3 integers >= 1, got {self.size}")
        object.__setattr__(self, "size", size)

    @property
    def variances(self) -> tuple[float, float, float]:
        if self.sigma_is_stddev:
            return tuple((0.1 * d) ** 2 for d in self.size)
        return tuple(0.1 * d for d in self.size)

    @property
    def radii(self) -> tuple[int, int, int]:
        return tuple(d // 2 for d in self.size)

    @property
    def norm_const(self) -> float:
        vz, vy, vx = self.variances
        return (2.0 * math.pi) ** -1.5 / math.sqrt(vz * vy * vx)


@dataclass
class GainField:
    grid: VoxelGrid
    patch: PatchSpec


@dataclass
class SamplingMap:
    """Per-voxel probability of being chosen as a patch center."""

    grid: VoxelGrid

    def __post_init__(self):
        data = self.grid.data
        if np.any(data < 0):
            raise ValueError("sampling map has negative entries")
        total = float(np.sum(data, dtype=np.float64))
        if abs(total - 1.0) > PSM_SUM_TOL:
            raise ValueError(f"sampling map sums to {total!r}, not 1")


def _axis_kernel(radius: int, variance: float) -> np.ndarray:
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(t * t) / (2.0 * variance))


def gain_map(interest: VoxelGrid, patch: PatchSpec) -> GainField:
    """Gain field of an interest mask: three separable truncated-Gaussian passes.

    Matches :func:`gain_at_naive` at every voxel. The mask is zero-padded, so
    the gain is exactly 0 wherever no interest voxel falls inside the box.
    """
    if interest.data.dtype != np.bool_:
        raise ValueError("interest map must be boolean")
    acc = interest.data.astype(np.float64)
    radii = patch.radii
    variances = patch.variances
    for axis in (0, 1, 2):
        r = radii[axis]
        k = _axis_kernel(r, variances[axis])
        nxt = np.zeros_like(acc)
        for i, t in enumerate(range(-r, r + 1)):
            d = [0, 0, 0]
            d[axis] = t
            nxt += k[i] * shifted(acc, *d, fill=0.0)
        acc = nxt
    acc *= patch.norm_const
    return GainField(interest.with_data(acc), patch)


def gain_at_naive(interest: VoxelGrid, patch: PatchSpec, p: Coord) -> float:
    """Direct triple-loop gain at one voxel; the test oracle for gain_map."""
    if interest.data.dtype != np.bool_:
        raise ValueError("interest map must be boolean")
    nz, ny, nx = interest.data.shape
    rz, ry, rx = patch.radii
    vz, vy, vx = patch.variances
    total = 0.0
    for dz in range(-rz, rz + 1):
        z = p.z + dz
        if z < 0 or z >= nz:
            continue
        for dy in range(-ry, ry + 1):
            y = p.y + dy
            if y < 0 or y >= ny:
                continue
            for dx in range(-rx, rx + 1):
                x = p.x + dx
                if x < 0 or x >= nx:
                    continue
                if interest.data[z, y, x]:
                    q = dz * dz / vz + dy * dy / vy + dx * dx / vx
                    total += math.exp(-0.5 * q)
    return patch.norm_const * total


def psm_from_gain(gain: GainField, mu: float = 1.0) -> SamplingMap:
    """Blend the gain field with the uniform map and renormalize.

    s_i = (g_i / mu + 1/n) / sum_j (g_j / mu + 1/n). Every probability is
    strictly positive because of the uniform floor.
    """
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    g = gain.grid.data.astype(np.float64)
    n = g.size
    shat = g / mu + 1.0 / n
    s = shat / np.sum(shat, dtype=np.float64)
    return SamplingMap(gain.grid.with_data(s))


def combine_psm(s_organ: SamplingMap, s_tumor: SamplingMap, lam: float) -> SamplingMap:
    """Convex mix of the organ-driven and tumor-driven maps."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    require_same_geometry(s_organ.grid, s_tumor.grid)
    mixed = (1.0 - lam) * s_organ.grid.data + lam * s_tumor.grid.data
    return SamplingMap(s_organ.grid.with_data(mixed))


def draw_centers(s: SamplingMap, count: int, seed: int) -> list[Coord]:
    """``count`` seeded categorical draws from the map, as voxel coordinates.

    Inverse-CDF over the flat z-major order; identical (map, count, seed)
    always reproduces the identical list.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    flat = s.grid.data.reshape(-1)
    cdf = np.cumsum(flat, dtype=np.float64)
    rng = np.random.default_rng(seed)
    u = rng.random(count)
    idx = np.searchsorted(cdf, u, side="right")
    np.clip(idx, 0, flat.size - 1, out=idx)
    dims = s.grid.dims
    return [coord_at(dims, int(i)) for i in idx]
