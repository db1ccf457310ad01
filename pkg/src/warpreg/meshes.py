"""Closed triangle surfaces: the ventricle segmentation and containment tests.

``point_in_mesh`` is the production test (ray-casting parity with
deterministic jitter, numba-accelerated); ``winding_number_inside`` is the
independent brute-force oracle used to validate it, built on the solid
angle subtended by each face rather than ray crossings.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import MeshTopologyError

AHA_LABELS = range(1, 18)


@dataclass
class LVMesh:
    vertices: np.ndarray          # (nv, 3)
    faces: np.ndarray             # (nf, 3) int
    aha_labels: np.ndarray        # (nv,) int, 1..17
    normals: np.ndarray = None    # (nv, 3) or None; computed lazily

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.aha_labels = np.asarray(self.aha_labels, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (nv, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (nf, 3)")
        if self.faces.min(initial=0) < 0 or self.faces.max(initial=-1) >= len(self.vertices):
            raise ValueError("face index out of range")
        if self.aha_labels.shape != (len(self.vertices),):
            raise ValueError("one label per vertex required")
        bad = (self.aha_labels < 1) | (self.aha_labels > 17)
        if np.any(bad):
            raise ValueError(f"labels outside 1..17 at vertices {np.flatnonzero(bad)[:5]}")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
        self._closed = None

    @property
    def is_closed(self) -> bool:
        """Every directed edge paired with its reverse exactly once."""
        if self._closed is None:
            edges = {}
            ok = True
            for tri in self.faces:
                for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                    key = (int(a), int(b))
                    edges[key] = edges.get(key, 0) + 1
                    if edges[key] > 1:
                        ok = False
            if ok:
                ok = all(edges.get((b, a), 0) == 1 for (a, b) in edges)
            self._closed = ok
        return self._closed

    def vertex_normals(self) -> np.ndarray:
        """Stored normals, or area-weighted face-normal averages."""
        if self.normals is not None:
            return self.normals
        fn = np.cross(self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]],
                      self.vertices[self.faces[:, 2]] - self.vertices[self.faces[:, 0]])
        acc = np.zeros_like(self.vertices)
        for c in range(3):
            np.add.at(acc, self.faces[:, c], fn)
        nrm = np.linalg.norm(acc, axis=1)
        nrm[nrm == 0.0] = 1.0
        return acc / nrm[:, None]

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def point_in_mesh(mesh: LVMesh, pts) -> np.ndarray:
    """True for points strictly inside the closed surface.

    Boundary-grazing rays are re-cast along the next jitter direction, so
    the answer is deterministic. Requires a closed mesh.
    """
    if not mesh.is_closed:
        raise MeshTopologyError("point-in-mesh needs a closed surface")
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    return _kernels.ray_cast_inside(mesh.vertices, mesh.faces, pts)


def winding_number_inside(mesh: LVMesh, pts, chunk=128) -> np.ndarray:
    """Brute-force oracle: total solid angle over all faces vs 2*pi.

    Independent of the ray-casting path on purpose; orientation-agnostic
    (uses the absolute winding).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    va = mesh.vertices[mesh.faces[:, 0]]
    vb = mesh.vertices[mesh.faces[:, 1]]
    vc = mesh.vertices[mesh.faces[:, 2]]
    out = np.zeros(len(pts), dtype=np.bool_)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        a = va[None, :, :] - p[:, None, :]
        b = vb[None, :, :] - p[:, None, :]
        c = vc[None, :, :] - p[:, None, :]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        numer = np.einsum("nfi,nfi->nf", a, np.cross(b, c))
        denom = (la * lb * lc + np.einsum("nfi,nfi->nf", a, b) * lc
                 + np.einsum("nfi,nfi->nf", b, c) * la
                 + np.einsum("nfi,nfi->nf", c, a) * lb)
        omega = 2.0 * np.arctan2(numer, denom)
        out[s:s + chunk] = np.abs(omega.sum(axis=1)) > 2.0 * np.pi
    return out


@dataclass
class MeshRegion:
    """Tissue region bounded by a closed mesh, with a voxel-mask cache.

    The mask is evaluated once at the voxel centers of a reference grid
    and reused for the many membership queries collocation sampling makes;
    exact containment stays available through ``point_in_mesh``.
    """
    mesh: LVMesh
    grid_origin: np.ndarray = None
    grid_spacing: np.ndarray = None
    mask: np.ndarray = None

    @classmethod
    def from_mesh(cls, mesh: LVMesh, img) -> "MeshRegion":
        from .grids import pixel_centers
        centers = pixel_centers(img)
        mask = point_in_mesh(mesh, centers).reshape(img.dims)
        return cls(mesh=mesh, grid_origin=img.origin.copy(),
                   grid_spacing=img.spacing.copy(), mask=mask)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.mask is None:
            return point_in_mesh(self.mesh, pts)
        idx = np.rint((pts - self.grid_origin) / self.grid_spacing).astype(np.int64)
        dims = np.array(self.mask.shape)
        inside_grid = np.all((idx >= 0) & (idx < dims), axis=1)
        out = np.zeros(len(pts), dtype=np.bool_)
        sel = np.flatnonzero(inside_grid)
        out[sel] = self.mask[tuple(idx[sel].T)]
        return out

    def bounding_box(self):
        return self.mesh.bounding_box()


@dataclass
class RingRegion:
    """Analytic 2D annulus R1 <= |X - center| <= R2 (boundaries included)."""
    center: np.ndarray
    r_inner: float
    r_outer: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if not (0.0 < self.r_inner < self.r_outer):
            raise ValueError("require 0 < inner radius < outer radius")

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        r = np.linalg.norm(pts - self.center, axis=1)
        return (r >= self.r_inner) & (r <= self.r_outer)

    def bounding_box(self):
        lo = self.center - self.r_outer
        hi = self.center + self.r_outer
        return lo, hi
