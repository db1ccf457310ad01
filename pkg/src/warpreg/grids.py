"""Scalar intensity grids with differentiable multilinear sampling.

Axis convention: array axis k of ``intensities`` is physical axis k, so a
2D grid is indexed [ix, iy] and a 3D grid [ix, iy, iz]. Voxel (i, j, k)
sits at ``origin + index * spacing``; the physical extent per axis is
(dims - 1) * spacing. Sampling interpolates over the 2^d surrounding
voxels and returns the exact gradient of the interpolant, which is what
lets image similarity losses backpropagate through a warped lookup.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError


@dataclass
class ImageGrid:
    dims: tuple
    spacing: np.ndarray
    origin: np.ndarray
    intensities: np.ndarray  # shape == dims, float64 in memory

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        if len(self.dims) not in (2, 3):
            raise DimensionError(f"grids must be 2D or 3D, got {len(self.dims)} axes")
        if any(n < 2 for n in self.dims):
            raise DimensionError("every axis needs at least 2 voxels")
        self.spacing = np.asarray(self.spacing, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.spacing.shape != (len(self.dims),) or np.any(self.spacing <= 0):
            raise DimensionError("spacing must be positive, one entry per axis")
        if self.origin.shape != (len(self.dims),):
            raise DimensionError("origin must have one entry per axis")
        self.intensities = np.ascontiguousarray(self.intensities, dtype=np.float64)
        if self.intensities.shape != self.dims:
            raise DimensionError(f"intensity array shape {self.intensities.shape} "
                                 f"does not match dims {self.dims}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def extent(self) -> np.ndarray:
        return (np.array(self.dims, dtype=np.float64) - 1.0) * self.spacing

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))


def sample_batch(img: ImageGrid, pts: np.ndarray):
    """Interpolate at physical points (N, d) -> (values (N,), gradients (N, d)).

    Out-of-domain queries clamp to the boundary cell with zero gradient
    along the clamped axis.
    """
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    if pts.shape[1] != img.ndim:
        raise DimensionError(f"points have width {pts.shape[1]}, grid is {img.ndim}D")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite sample positions")
    if img.ndim == 2:
        return _kernels.interp2_sample(img.intensities, img.origin, img.spacing, pts)
    return _kernels.interp3_sample(img.intensities, img.origin, img.spacing, pts)


def sample(img: ImageGrid, x):
    """Single-point convenience wrapper: returns (intensity, gradient)."""
    vals, grads = sample_batch(img, np.asarray(x, dtype=np.float64)[None, :])
    return float(vals[0]), grads[0]


def pixel_centers(img: ImageGrid) -> np.ndarray:
    """Physical coordinates of every voxel, axis-major (axis 0 slowest)."""
    axes = [img.origin[a] + img.spacing[a] * np.arange(img.dims[a])
            for a in range(img.ndim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def add_gaussian_noise(img: ImageGrid, relative_sigma: float, rng_seed: int) -> ImageGrid:
    """Add i.i.d. N(0, (relative_sigma * intensity_range)^2) noise."""
    if relative_sigma < 0:
        raise ValueError("relative_sigma must be >= 0")
    if relative_sigma == 0:
        noisy = img.intensities.copy()
    else:
        rng = np.random.default_rng(rng_seed)
        scale = relative_sigma * float(img.intensities.max() - img.intensities.min())
        noisy = img.intensities + rng.normal(0.0, scale, size=img.dims)
    return ImageGrid(img.dims, img.spacing.copy(), img.origin.copy(), noisy)
