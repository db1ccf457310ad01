"""Quantitative evaluation of trained deformation fields.

Image similarity (MSE and SSIM), landmark tracking and its error
statistics, per-vertex Jacobian maps, strain curves averaged over segment
groups, and 1D profiles against the analytic oracle.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DegenerateGeometryError, DimensionError
from .grids import ImageGrid
from .landmarks import LandmarkSet
from .mechanics import build_frame
from .meshes import LVMesh

# Segment groups used for strain averaging; 6, 12 and 17 belong to neither.
SEPTUM_SEGMENTS = frozenset({1, 2, 3, 7, 8, 9, 13, 14})
FREE_WALL_SEGMENTS = frozenset({4, 5, 10, 11, 15, 16})
DEFAULT_GROUPS = {"septum": SEPTUM_SEGMENTS, "free_wall": FREE_WALL_SEGMENTS}


def mse(img_a: ImageGrid, img_b: ImageGrid) -> float:
    if img_a.dims != img_b.dims:
        raise DimensionError("image dims differ")
    diff = img_a.intensities - img_b.intensities
    return float(np.mean(diff * diff))


def _gaussian_window(sigma=1.5, taps=11):
    x = np.arange(taps) - (taps - 1) / 2.0
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def ssim(img_a: ImageGrid, img_b: ImageGrid, k1=0.01, k2=0.03) -> float:
    """Mean local SSIM with an 11-tap Gaussian window (sigma 1.5).

    The dynamic range is taken from img_a (the reference); a constant
    reference falls back to range 1 so the stabilizing constants stay
    positive.
    """
    if img_a.dims != img_b.dims:
        raise DimensionError("image dims differ")
    a = img_a.intensities
    b = img_b.intensities
    rng = float(a.max() - a.min())
    if rng == 0.0:
        rng = 1.0
    c1 = (k1 * rng) ** 2
    c2 = (k2 * rng) ** 2
    win = _gaussian_window()

    def smooth(x):
        for ax in range(x.ndim):
            x = correlate1d(x, win, axis=ax, mode="reflect")
        return x

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a * mu_a
    var_b = smooth(b * b) - mu_b * mu_b
    cov = smooth(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def track_landmarks(field, lm0: LandmarkSet, frame_times) -> list:
    """Push reference-frame landmarks through phi(X, t) for each time.

    Landmarks outside the field's domain are tracked anyway (the field is
    defined everywhere) but reported with a warning.
    """
    pts = lm0.points[:, :field.spatial_dim]
    if hasattr(field, "domain_origin"):
        lo = field.domain_origin
        hi = field.domain_origin + field.domain_extent
        outside = np.any((pts < lo) | (pts > hi), axis=1)
        if np.any(outside):
            warnings.warn(f"{int(outside.sum())} landmarks lie outside the "
                          "image domain; tracking them anyway")
    out = []
    for frame, t in enumerate(frame_times):
        u = field.displacement_batch(pts, t if field.time_dependent else None)
        moved = lm0.points.copy()
        moved[:, :field.spatial_dim] += u
        out.append(lm0.with_points(moved, frame=frame))
    return out


@dataclass
class LandmarkErrorStats:
    distances: np.ndarray
    median: float
    q1: float
    q3: float
    outliers: np.ndarray      # indices into distances beyond 1.5 IQR whiskers


def landmark_error_stats(predicted, ground_truth) -> LandmarkErrorStats:
    """Pool Euclidean distances over matched landmark sets.

    Accepts single LandmarkSets or lists of them; cardinality must match
    pairwise.
    """
    if isinstance(predicted, LandmarkSet):
        predicted = [predicted]
        ground_truth = [ground_truth]
    if len(predicted) != len(ground_truth) or not predicted:
        raise ValueError("predicted and ground-truth lists must match and be nonempty")
    dists = []
    for p, g in zip(predicted, ground_truth):
        if len(p) != len(g):
            raise ValueError("landmark sets have different cardinality")
        dists.append(np.linalg.norm(p.points - g.points, axis=1))
    dists = np.concatenate(dists)
    q1, med, q3 = np.percentile(dists, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    out = np.flatnonzero((dists > q3 + 1.5 * iqr) | (dists < q1 - 1.5 * iqr))
    return LandmarkErrorStats(distances=dists, median=float(med),
                              q1=float(q1), q3=float(q3), outliers=out)


@dataclass
class StrainCurve:
    times: np.ndarray
    values: np.ndarray
    direction: str            # radial | circumferential | longitudinal
    group: str


def _vertex_frames(mesh: LVMesh):
    normals = mesh.vertex_normals()
    frames = {}
    skipped = 0
    for i, e in enumerate(normals):
        try:
            frames[i] = build_frame(e)
        except DegenerateGeometryError:
            skipped += 1
    if skipped:
        warnings.warn(f"{skipped} vertices skipped (normal parallel to the "
                      "longitudinal axis)")
    return frames


def strain_curves(field, mesh: LVMesh, frame_times, groups=None) -> list:
    """Directional strains averaged per segment group, one curve per
    (direction, group). Vertices with degenerate normals are skipped."""
    groups = DEFAULT_GROUPS if groups is None else groups
    frames = _vertex_frames(mesh)
    idx = np.array(sorted(frames.keys()), dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("no usable vertices (all normals degenerate)")
    dirs = {
        "longitudinal": np.stack([frames[i].l for i in idx]),
        "radial": np.stack([frames[i].r for i in idx]),
        "circumferential": np.stack([frames[i].c for i in idx]),
    }
    labels = mesh.aha_labels[idx]
    members = {name: np.isin(labels, list(segs)) for name, segs in groups.items()}
    frame_times = np.asarray(frame_times, dtype=np.float64)
    series = {(d, g): np.empty(len(frame_times)) for d in dirs for g in members}
    verts = mesh.vertices[idx]
    eye = np.eye(3)
    for k, t in enumerate(frame_times):
        _, F = field.kinematics_batch(verts, t if field.time_dependent else None)
        E = 0.5 * (np.einsum("nji,njk->nik", F, F) - eye)
        for dname, p in dirs.items():
            proj = np.einsum("ni,nij,nj->n", p, E, p)
            for gname, sel in members.items():
                if not np.any(sel):
                    raise ValueError(f"group {gname} has no vertices")
                series[(dname, gname)][k] = float(np.mean(proj[sel]))
    return [StrainCurve(times=frame_times.copy(), values=vals,
                        direction=d, group=g)
            for (d, g), vals in series.items()]


def jacobian_map(field, mesh: LVMesh, t=None):
    """J at every vertex at time t plus summary statistics."""
    _, F = field.kinematics_batch(mesh.vertices,
                                  t if field.time_dependent else None)
    J = np.linalg.det(F)
    summary = {"mean_abs_dev": float(np.mean(np.abs(J - 1.0))),
               "min": float(J.min()), "max": float(J.max())}
    return J, summary


def extract_profile(field, y_value: float, x_range=(0.0, 1.0),
                    n_samples: int = 512, oracle=None, t=None) -> dict:
    """Sweep x at fixed y and report u_x, its x-derivative and J.

    Returns columns as a dict; when an oracle field is supplied its
    matching columns are appended with an oracle_ prefix.
    """
    xs = np.linspace(x_range[0], x_range[1], n_samples)
    pts = np.stack([xs, np.full_like(xs, y_value)], axis=1)
    if field.spatial_dim == 3:
        pts = np.concatenate([pts, np.zeros((n_samples, 1))], axis=1)
    out = {"x": xs}
    for prefix, f in (("", field),) + ((("oracle_", oracle),) if oracle else ()):
        u, F = f.kinematics_batch(pts, t if f.time_dependent else None)
        out[prefix + "u_x"] = u[:, 0]
        out[prefix + "du_x_dX"] = F[:, 0, 0] - 1.0
        out[prefix + "J"] = np.linalg.det(F)
    return out
