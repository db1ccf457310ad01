"""Fixed random sinusoidal embedding of spatial coordinates.

A frequency matrix B (m x d) is drawn once from N(0, sigma^2) and never
trained. A spatial point X maps to [cos(BX); sin(BX)] of length 2m; an
optional time coordinate is appended raw after the embedding, so time
stays a low-frequency input. ``IdentityMap`` is the drop-in used when the
embedding is disabled: same interface, input width d instead of 2m.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class FourierMap:
    B: np.ndarray        # (m, d), fixed after construction
    m: int
    sigma: float
    spatial_dim: int
    rng_seed: int

    @property
    def output_width(self) -> int:
        return 2 * self.m


@dataclass(frozen=True)
class IdentityMap:
    spatial_dim: int

    @property
    def output_width(self) -> int:
        return self.spatial_dim


def sample_fourier(m: int, sigma: float, d: int, rng_seed: int) -> FourierMap:
    """Draw B with i.i.d. N(0, sigma^2) entries, reproducibly."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if d not in (2, 3):
        raise ValueError(f"spatial dimension must be 2 or 3, got {d}")
    rng = np.random.default_rng(rng_seed)
    B = sigma * rng.standard_normal((m, d))
    B.setflags(write=False)
    return FourierMap(B=B, m=m, sigma=float(sigma), spatial_dim=d, rng_seed=rng_seed)


def _check_points(emap, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != emap.spatial_dim:
        raise DimensionError(f"points have width {X.shape[1]}, "
                             f"embedding expects {emap.spatial_dim}")
    return X


def embed(emap, X, t=None) -> np.ndarray:
    """Embed points (N, d) -> (N, width), appending time unembedded if given.

    ``t`` may be a scalar (shared by the batch) or an (N,) array.
    """
    X = _check_points(emap, X)
    if isinstance(emap, IdentityMap):
        out = X
    else:
        phase = X @ emap.B.T
        out = np.concatenate((np.cos(phase), np.sin(phase)), axis=1)
    if t is not None:
        tcol = np.broadcast_to(np.asarray(t, dtype=np.float64), (X.shape[0],))
        out = np.concatenate((out, tcol[:, None]), axis=1)
    return out


def embed_tangents(emap, X, input_width: int) -> np.ndarray:
    """Per-point tangents of the embedding along the spatial unit directions.

    Returns (N, d, input_width): row s is d(embedding)/dX_s, zero on the
    appended time column. Feed these as seeds to propagate spatial
    derivatives through the network.
    """
    X = _check_points(emap, X)
    n, d = X.shape
    seeds = np.zeros((n, d, input_width))
    if isinstance(emap, IdentityMap):
        for s in range(d):
            seeds[:, s, s] = 1.0
    else:
        phase = X @ emap.B.T
        sin = np.sin(phase)
        cos = np.cos(phase)
        m = emap.m
        for s in range(d):
            seeds[:, s, :m] = -sin * emap.B[:, s]
            seeds[:, s, m:2 * m] = cos * emap.B[:, s]
    return seeds
