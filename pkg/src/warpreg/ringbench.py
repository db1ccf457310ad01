"""Synthetic benchmark: an incompressible ring contraction with exact oracles.

A ring of radii (R1, R2) centered at (0.5, 0.5) contracts to radii
(r1, r2) under the radial map

    phi(X) = center + f(|X - center|) (X - center)

with f constant inside and outside the ring and equal to
sqrt(R^2 - R1^2 + r1^2) / R on it, which makes the map exactly
area-preserving there (unit Jacobian). Published radii R1=0.15, R2=0.32,
r1=0.1, r2=0.3 nearly conserve the ring area (0.0799 vs 0.08), which
leaves a ~5.2e-4 jump of f at R2; the defect is reproduced as is and
reported, not corrected.

The reference image is the analytic template sin(4 pi x) cos(4 pi y)
composed with the map; oracles return exact displacement, deformation
gradient, Jacobian and strain anywhere, computed from f and f' in polar
form and rotated to Cartesian. A time-scaled variant phi_t = X + t u(X)
drives the extruded 3D+t fixture.
"""

from dataclasses import dataclass

import numpy as np

from .field import OracleField
from .grids import ImageGrid, add_gaussian_noise, pixel_centers
from .meshes import LVMesh

DEFAULT_RADII = (0.15, 0.32, 0.1, 0.3)


@dataclass(frozen=True)
class RingSpec:
    R1: float = 0.15
    R2: float = 0.32
    r1: float = 0.1
    r2: float = 0.3
    center: tuple = (0.5, 0.5)

    def __post_init__(self):
        if not (0.0 < self.R1 < self.R2 and 0.0 < self.r1 < self.r2):
            raise ValueError("radii must satisfy 0 < inner < outer")

    @property
    def area_defect(self) -> float:
        """|(R2^2 - R1^2) - (r2^2 - r1^2)|, zero for exact area conservation."""
        return abs((self.R2 ** 2 - self.R1 ** 2) - (self.r2 ** 2 - self.r1 ** 2))


def radial_profile(spec: RingSpec, R):
    """The scaling f(R); R may be scalar or array, R=0 uses the inner branch."""
    R = np.asarray(R, dtype=np.float64)
    inner = spec.r1 / spec.R1
    outer = spec.r2 / spec.R2
    with np.errstate(divide="ignore", invalid="ignore"):
        ring = np.sqrt(np.maximum(R * R - spec.R1 ** 2 + spec.r1 ** 2, 0.0)) / R
    f = np.where(R < spec.R1, inner, np.where(R > spec.R2, outer, ring))
    return f if f.ndim else float(f)


def _profile_derivative(spec: RingSpec, R):
    """f'(R), zero on the constant branches."""
    R = np.asarray(R, dtype=np.float64)
    rho = np.sqrt(np.maximum(R * R - spec.R1 ** 2 + spec.r1 ** 2, 1e-300))
    with np.errstate(divide="ignore"):
        ring = (spec.R1 ** 2 - spec.r1 ** 2) / (rho * R * R)
    on_ring = (R >= spec.R1) & (R <= spec.R2)
    return np.where(on_ring, ring, 0.0)


def deform(spec: RingSpec, X, t=None):
    """phi(X) (or phi_t(X) = X + t u(X) when t is given) for points (N, 2)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rel = X - np.asarray(spec.center)
    R = np.linalg.norm(rel, axis=1)
    f = radial_profile(spec, R)
    if t is not None:
        f = 1.0 + t * (f - 1.0)
    return np.asarray(spec.center) + f[:, None] * rel


class RingOracle:
    """Exact kinematics of the (optionally time-scaled) ring deformation.

    With spatial_dim=3 the map is extruded with an identity z-mapping:
    in-plane behavior is unchanged and the through-plane stretch is 1.
    """

    def __init__(self, spec: RingSpec, spatial_dim=2, time_scaled=False):
        self.spec = spec
        self.spatial_dim = spatial_dim
        self.time_scaled = time_scaled

    def _polar(self, X, t):
        rel = X[:, :2] - np.asarray(self.spec.center)
        R = np.linalg.norm(rel, axis=1)
        f = radial_profile(self.spec, R)
        fp = _profile_derivative(self.spec, R)
        if self.time_scaled:
            if t is None:
                raise ValueError("time-scaled oracle queried without a time")
            f = 1.0 + t * (f - 1.0)
            fp = t * fp
        lam_hoop = f
        lam_rad = f + R * fp
        return rel, R, lam_rad, lam_hoop

    def displacement(self, X, t=None):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        rel, R, _, lam_hoop = self._polar(X, t)
        u = np.zeros((len(X), self.spatial_dim))
        u[:, :2] = (lam_hoop - 1.0)[:, None] * rel
        return u

    def displacement_gradient(self, X, t=None):
        """du/dX, (N, d, d): (f - 1) I + f'(R)/R (X-c)(X-c)^T in-plane."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        rel, R, lam_rad, lam_hoop = self._polar(X, t)
        d = self.spatial_dim
        grad = np.zeros((len(X), d, d))
        safe = np.maximum(R, 1e-300)
        e = rel / safe[:, None]
        outer = e[:, :, None] * e[:, None, :]
        eye2 = np.eye(2)
        grad[:, :2, :2] = ((lam_hoop - 1.0)[:, None, None] * eye2
                           + (lam_rad - lam_hoop)[:, None, None] * outer)
        center = R == 0.0
        grad[center, :2, :2] = (lam_hoop[center] - 1.0)[:, None, None] * eye2
        return grad

    def deformation_gradient(self, X, t=None):
        grad = self.displacement_gradient(X, t)
        idx = np.arange(self.spatial_dim)
        grad[:, idx, idx] += 1.0
        return grad

    def jacobian(self, X, t=None):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        _, _, lam_rad, lam_hoop = self._polar(X, t)
        return lam_rad * lam_hoop

    def strain(self, X, t=None):
        """Green-Lagrange tensors (N, d, d) from the principal stretches."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        rel, R, lam_rad, lam_hoop = self._polar(X, t)
        d = self.spatial_dim
        safe = np.maximum(R, 1e-300)
        e = rel / safe[:, None]
        outer = e[:, :, None] * e[:, None, :]
        Err = 0.5 * (lam_rad ** 2 - 1.0)
        Ett = 0.5 * (lam_hoop ** 2 - 1.0)
        E = np.zeros((len(X), d, d))
        E[:, :2, :2] = (Ett[:, None, None] * np.eye(2)
                        + (Err - Ett)[:, None, None] * outer)
        E[R == 0.0, :2, :2] = Ett[R == 0.0][:, None, None] * np.eye(2)
        return E

    def as_field(self) -> OracleField:
        if self.time_scaled:
            return OracleField(lambda X, t: self.displacement(X, t),
                               lambda X, t: self.displacement_gradient(X, t),
                               spatial_dim=self.spatial_dim, time_dependent=True)
        return OracleField(lambda X: self.displacement(X),
                           lambda X: self.displacement_gradient(X),
                           spatial_dim=self.spatial_dim)


def template_intensity(X):
    """Analytic template sin(4 pi x) cos(4 pi y) for points (N, 2+)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.sin(4.0 * np.pi * X[:, 0]) * np.cos(4.0 * np.pi * X[:, 1])


def _noise_seeds(noise_seed: int, n: int):
    return [int(s) for s in np.random.SeedSequence(noise_seed).generate_state(n)]


def synthesize_pair(spec: RingSpec, resolution: int, noise_seed: int,
                    noise_rel: float = 0.005):
    """Rasterize the (reference, template) pair on [0,1]^2 plus its oracle.

    The template is the analytic intensity pattern; the reference is the
    pattern composed with the ring map, so registering template onto
    reference should recover the map. Both images get independent Gaussian
    noise of noise_rel * intensity range (default keeps the absolute noise
    level at sigma = 0.01 for the unit-amplitude pattern).
    """
    if resolution < 64:
        raise ValueError("resolution must be at least 64 per axis")
    dims = (resolution, resolution)
    spacing = np.full(2, 1.0 / (resolution - 1))
    origin = np.zeros(2)
    blank = ImageGrid(dims, spacing, origin, np.zeros(dims))
    pts = pixel_centers(blank)
    t_img = ImageGrid(dims, spacing, origin,
                      template_intensity(pts).reshape(dims))
    r_img = ImageGrid(dims, spacing, origin,
                      template_intensity(deform(spec, pts)).reshape(dims))
    seed_t, seed_r = _noise_seeds(noise_seed, 2)
    return (add_gaussian_noise(r_img, noise_rel, seed_r),
            add_gaussian_noise(t_img, noise_rel, seed_t),
            RingOracle(spec))


def invert_radial(spec: RingSpec, rho, t):
    """Reference radius R with R * (1 - t + t f(R)) = rho, by bisection.

    The scaled radius is strictly increasing in R, so the root is unique;
    80 bisection steps take it to full float64 precision.
    """
    rho = np.asarray(rho, dtype=np.float64)
    lo = np.zeros_like(rho)
    shrink = min(spec.r1 / spec.R1, spec.r2 / spec.R2, 1.0)
    hi = np.maximum(rho / min(1.0 - t + t * shrink, 1.0), rho) + 1e-9
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        fmid = mid * (1.0 - t + t * radial_profile(spec, mid))
        take = fmid < rho
        lo = np.where(take, mid, lo)
        hi = np.where(take, hi, mid)
    return 0.5 * (lo + hi)


def extruded_intensity(X, z_extent):
    """3D pattern: the 2D template plus a through-plane ramp with a
    nonvanishing z-gradient, so all three displacement components are
    observable."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    zn = X[:, 2] / z_extent
    return template_intensity(X) + 0.5 * np.cos(np.pi * (0.25 + 0.5 * zn))


def extruded_sequence(spec: RingSpec, dims, z_extent: float, n_frames: int,
                      noise_seed: int, noise_rel: float = 0.005):
    """Frame stack for the 3D+t fixture under phi_t = X + t u(X).

    Frame j shows the material pattern advected to time t_j = j/(n_frames-1):
    its intensity at a voxel y is the reference pattern at phi_t^{-1}(y),
    with the z-mapping kept identity. Returns (frames, times); frames[0]
    is the reference.
    """
    if n_frames < 2:
        raise ValueError("need at least two frames")
    dims = tuple(int(n) for n in dims)
    spacing = np.array([1.0 / (dims[0] - 1), 1.0 / (dims[1] - 1),
                        z_extent / (dims[2] - 1)])
    origin = np.zeros(3)
    blank = ImageGrid(dims, spacing, origin, np.zeros(dims))
    pts = pixel_centers(blank)
    center = np.asarray(spec.center)
    rel = pts[:, :2] - center
    rho = np.linalg.norm(rel, axis=1)
    e = rel / np.maximum(rho, 1e-300)[:, None]
    times = np.arange(n_frames) / (n_frames - 1)
    seeds = _noise_seeds(noise_seed, n_frames)
    frames = []
    for j, t in enumerate(times):
        if t == 0.0:
            src = pts
        else:
            R = invert_radial(spec, rho, t)
            src = pts.copy()
            src[:, :2] = center + R[:, None] * e
        img = ImageGrid(dims, spacing, origin,
                        extruded_intensity(src, z_extent).reshape(dims))
        frames.append(add_gaussian_noise(img, noise_rel, seeds[j]))
    return frames, times


def annular_shell_mesh(spec: RingSpec, z_lo: float, z_hi: float,
                       n_theta: int = 48, n_z: int = 3) -> LVMesh:
    """Watertight triangulated boundary of the extruded ring volume.

    Walls carry radial normals; the flat caps carry +-z normals (those are
    the degenerate-frame cases downstream). Vertex labels follow the
    17-segment layout loosely: 6 sectors on the top band, 6 on the middle,
    4 on the bottom, so septum/free-wall grouping has members at every
    level.
    """
    zs = np.linspace(z_lo, z_hi, n_z)
    theta = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    cx, cy = spec.center
    verts, normals = [], []
    ring_index = {}
    for which, radius, sign in (("inner", spec.R1, -1.0), ("outer", spec.R2, 1.0)):
        for iz, z in enumerate(zs):
            for it, th in enumerate(theta):
                ring_index[(which, iz, it)] = len(verts)
                verts.append([cx + radius * np.cos(th), cy + radius * np.sin(th), z])
                nz = 0.0
                if iz == 0:
                    nz = -1.0
                elif iz == n_z - 1:
                    nz = 1.0
                n = np.array([sign * np.cos(th), sign * np.sin(th), nz])
                normals.append(n / np.linalg.norm(n))
    faces = []

    def quad(a, b, c, d):
        faces.append([a, b, c])
        faces.append([a, c, d])

    for iz in range(n_z - 1):
        for it in range(n_theta):
            jt = (it + 1) % n_theta
            # outer wall, outward = away from the axis
            quad(ring_index[("outer", iz, it)], ring_index[("outer", iz, jt)],
                 ring_index[("outer", iz + 1, jt)], ring_index[("outer", iz + 1, it)])
            # inner wall, outward = toward the axis
            quad(ring_index[("inner", iz, jt)], ring_index[("inner", iz, it)],
                 ring_index[("inner", iz + 1, it)], ring_index[("inner", iz + 1, jt)])
    for it in range(n_theta):
        jt = (it + 1) % n_theta
        # bottom cap (outward -z) and top cap (outward +z)
        quad(ring_index[("inner", 0, it)], ring_index[("inner", 0, jt)],
             ring_index[("outer", 0, jt)], ring_index[("outer", 0, it)])
        quad(ring_index[("inner", n_z - 1, jt)], ring_index[("inner", n_z - 1, it)],
             ring_index[("outer", n_z - 1, it)], ring_index[("outer", n_z - 1, jt)])

    verts = np.array(verts)
    normals = np.array(normals)
    z_band = np.clip(((verts[:, 2] - z_lo) / max(z_hi - z_lo, 1e-12) * 3).astype(int), 0, 2)
    angle = np.mod(np.arctan2(verts[:, 1] - cy, verts[:, 0] - cx), 2.0 * np.pi)
    labels = np.empty(len(verts), dtype=np.int64)
    for band, (base, count) in enumerate(((13, 4), (7, 6), (1, 6))):
        sel = z_band == band
        labels[sel] = base + (angle[sel] / (2.0 * np.pi) * count).astype(int) % count
    return LVMesh(vertices=verts, faces=np.array(faces), aha_labels=labels,
                  normals=normals)


def fixture_landmarks(spec: RingSpec, z_lo: float, z_hi: float,
                      radius: float = 0.18):
    """Twelve tracked points: 4 walls x 3 levels on a mid-wall circle."""
    walls = [("anterior", 0.5 * np.pi), ("lateral", 0.0),
             ("posterior", 1.5 * np.pi), ("septal", np.pi)]
    levels = [("basal", z_hi), ("midventricular", 0.5 * (z_lo + z_hi)),
              ("apical", z_lo)]
    cx, cy = spec.center
    names, pts = [], []
    for wall, th in walls:
        for level, z in levels:
            names.append((wall, level))
            pts.append([cx + radius * np.cos(th), cy + radius * np.sin(th), z])
    return names, np.array(pts)
