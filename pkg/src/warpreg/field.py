"""The deformation mapping phi(X, t) = X + u(X, t) and its kinematics.

``DeformationField`` wraps the network and the input embedding in residual
form, so the identity map is the zero network. Spatial coordinates are
normalized per axis to [0, 1] before embedding; all derivatives are
reported in physical coordinates (the normalization scale factors are
folded into F by the chain rule, so det F measures physical volume
change).

``OracleField`` exposes the same evaluation interface for closed-form
displacement fields, which lets the kinematics and evaluation machinery
be tested without training anything.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff, fourier
from .errors import DimensionError
from .optim import AdamState, adam_step


@dataclass
class DeformationSample:
    """Pointwise kinematic state: displacement and strain measures."""
    u: np.ndarray
    F: np.ndarray
    J: float
    C: np.ndarray
    E: np.ndarray


@dataclass
class DeformationField:
    net: autodiff.DenseNetwork
    embedding: object               # FourierMap or IdentityMap
    spatial_dim: int
    time_dependent: bool
    domain_origin: np.ndarray
    domain_extent: np.ndarray

    def __post_init__(self):
        self.domain_origin = np.asarray(self.domain_origin, dtype=np.float64)
        self.domain_extent = np.asarray(self.domain_extent, dtype=np.float64)
        if self.domain_origin.shape != (self.spatial_dim,) or \
           self.domain_extent.shape != (self.spatial_dim,):
            raise DimensionError("domain origin/extent must have one entry per axis")
        if np.any(self.domain_extent <= 0):
            raise DimensionError("domain extent must be positive")
        expected = self.embedding.output_width + (1 if self.time_dependent else 0)
        if self.net.input_width != expected:
            raise DimensionError(f"network input width {self.net.input_width}, "
                                 f"embedding provides {expected}")
        if self.net.output_width != self.spatial_dim:
            raise DimensionError("network output width must equal the spatial dimension")

    def _normalize(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.spatial_dim:
            raise DimensionError(f"points have width {X.shape[1]}, field is "
                                 f"{self.spatial_dim}D")
        return (X - self.domain_origin) / self.domain_extent

    def embed_points(self, X, t=None):
        Xn = self._normalize(X)
        if self.time_dependent:
            if t is None:
                raise ValueError("time-dependent field queried without a time")
            return fourier.embed(self.embedding, Xn, t)
        return fourier.embed(self.embedding, Xn)

    def displacement_batch(self, X, t=None) -> np.ndarray:
        return autodiff.forward(self.net, self.embed_points(X, t))

    def kinematics_batch(self, X, t=None):
        """u (N, d) and physical deformation gradients F (N, d, d)."""
        Xn = self._normalize(X)
        inputs = self.embed_points(X, t)
        seeds = fourier.embed_tangents(self.embedding, Xn, self.net.input_width)
        seeds /= self.domain_extent[None, :, None]
        dual = autodiff.forward_with_jacobian(self.net, inputs, seeds)
        F = np.swapaxes(dual.directional_derivatives, 1, 2).copy()
        idx = np.arange(self.spatial_dim)
        F[:, idx, idx] += 1.0
        return dual.values, F

    def dual_batch(self, X, t=None) -> autodiff.DualBatch:
        """Forward pass with spatial tangents, cache kept for backward_dual."""
        Xn = self._normalize(X)
        inputs = self.embed_points(X, t)
        seeds = fourier.embed_tangents(self.embedding, Xn, self.net.input_width)
        seeds /= self.domain_extent[None, :, None]
        return autodiff.forward_with_jacobian(self.net, inputs, seeds)


class OracleField:
    """Closed-form displacement field with the evaluation interface of
    ``DeformationField``; the displacement gradient must be analytic."""

    def __init__(self, u_fn, grad_fn, spatial_dim, time_dependent=False):
        self.u_fn = u_fn
        self.grad_fn = grad_fn
        self.spatial_dim = spatial_dim
        self.time_dependent = time_dependent

    def displacement_batch(self, X, t=None):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.u_fn(X, t) if self.time_dependent else self.u_fn(X)

    def kinematics_batch(self, X, t=None):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        u = self.displacement_batch(X, t)
        grad = self.grad_fn(X, t) if self.time_dependent else self.grad_fn(X)
        F = grad.copy()
        idx = np.arange(self.spatial_dim)
        F[:, idx, idx] += 1.0
        return u, F


def uniform_scaling_field(s: float, d: int) -> OracleField:
    return OracleField(lambda X: (s - 1.0) * X,
                       lambda X: np.broadcast_to((s - 1.0) * np.eye(d),
                                                 (len(X), d, d)).copy(),
                       spatial_dim=d)


def rigid_rotation_field(Q: np.ndarray) -> OracleField:
    Q = np.asarray(Q, dtype=np.float64)
    d = Q.shape[0]
    A = Q - np.eye(d)
    return OracleField(lambda X: X @ A.T,
                       lambda X: np.broadcast_to(A, (len(X), d, d)).copy(),
                       spatial_dim=d)


def translation_field(v) -> OracleField:
    v = np.asarray(v, dtype=np.float64)
    d = len(v)
    return OracleField(lambda X: np.broadcast_to(v, (len(X), d)).copy(),
                       lambda X: np.zeros((len(X), d, d)),
                       spatial_dim=d)


def displacement(field, X, t=None) -> np.ndarray:
    """u at a single point (or batch)."""
    u = field.displacement_batch(X, t)
    return u[0] if np.asarray(X).ndim == 1 else u


def sample_kinematics(field, X, t=None) -> DeformationSample:
    """Full kinematic sample at one point: u, F, J, C, E.

    Non-finite intermediates are a diagnostics failure and raise rather
    than being clamped.
    """
    X = np.asarray(X, dtype=np.float64)
    u, F = field.kinematics_batch(X[None, :], t)
    u, F = u[0], F[0]
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(F))):
        raise ValueError(f"non-finite kinematics at X={X}, t={t}")
    C = F.T @ F
    E = 0.5 * (C - np.eye(F.shape[0]))
    return DeformationSample(u=u, F=F, J=float(np.linalg.det(F)), C=C, E=E)


def pretrain(field: DeformationField, pixel_grid: np.ndarray, config) -> dict:
    """Warm start: drive the displacement to zero over the given grid.

    Minimizes the mean squared displacement with Adam until it drops below
    config.warmstart_tol or config.warmstart_iters is hit. Returns a small
    report; failure to reach the tolerance warns and training proceeds.
    """
    n = len(pixel_grid)
    emb_spatial = fourier.embed(field.embedding, field._normalize(pixel_grid))
    if field.time_dependent:
        inputs = np.empty((n, emb_spatial.shape[1] + 1))
        inputs[:, :-1] = emb_spatial
    else:
        inputs = emb_spatial
    rng = np.random.default_rng(config.collocation_seed + 1)
    params = autodiff.net_params(field.net)
    state = AdamState.for_params(params, config.beta1, config.beta2, config.eps)
    ws = autodiff.Workspace(field.net, n)
    cot = np.empty((n, field.spatial_dim))
    tol = config.warmstart_tol
    msd = None
    iterations = 0
    for it in range(config.warmstart_iters):
        if field.time_dependent:
            inputs[:, -1] = rng.uniform(0.0, 1.0, size=n)
        u = autodiff.forward_ws(field.net, inputs, ws)
        msd = float(np.mean(np.sum(u * u, axis=1)))
        if msd <= tol:
            break
        np.multiply(u, 2.0 / n, out=cot)
        grad = autodiff.backward_ws(field.net, inputs, ws, cot)
        adam_step(state, params, grad.flat(), config.learning_rate)
        iterations = it + 1
    if msd is not None and msd > tol:
        warnings.warn(f"warm start stopped at mean squared displacement {msd:.3e} "
                      f"(target {tol:.3e}) after {iterations} iterations")
    return {"iterations": iterations, "mean_squared_displacement": msd}
