"""Numba twins of the kernels in ``numpy_impl``.

Serial @njit loops: the gather-dominated interpolation and the per-face ray
casting are the two places where explicit loops beat vectorized numpy. Same
signatures, same clamp and jitter semantics.
"""

import numpy as np
from numba import njit

from .numpy_impl import RAY_DIRECTIONS


@njit(cache=True)
def interp2_sample(values, origin, spacing, pts):
    n0, n1 = values.shape
    npts = pts.shape[0]
    vals = np.empty(npts)
    grads = np.empty((npts, 2))
    for k in range(npts):
        c0 = (pts[k, 0] - origin[0]) / spacing[0]
        c1 = (pts[k, 1] - origin[1]) / spacing[1]
        out0 = c0 < 0.0 or c0 > n0 - 1.0
        out1 = c1 < 0.0 or c1 > n1 - 1.0
        c0 = min(max(c0, 0.0), n0 - 1.0)
        c1 = min(max(c1, 0.0), n1 - 1.0)
        i0 = min(int(c0), n0 - 2)
        i1 = min(int(c1), n1 - 2)
        f0 = c0 - i0
        f1 = c1 - i1
        v00 = values[i0, i1]
        v01 = values[i0, i1 + 1]
        v10 = values[i0 + 1, i1]
        v11 = values[i0 + 1, i1 + 1]
        lo = v00 * (1.0 - f1) + v01 * f1
        hi = v10 * (1.0 - f1) + v11 * f1
        vals[k] = lo * (1.0 - f0) + hi * f0
        grads[k, 0] = 0.0 if out0 else (hi - lo) / spacing[0]
        grads[k, 1] = 0.0 if out1 else (
            (v01 - v00) * (1.0 - f0) + (v11 - v10) * f0) / spacing[1]
    return vals, grads


@njit(cache=True)
def interp3_sample(values, origin, spacing, pts):
    n0, n1, n2 = values.shape
    npts = pts.shape[0]
    vals = np.empty(npts)
    grads = np.empty((npts, 3))
    for k in range(npts):
        c0 = (pts[k, 0] - origin[0]) / spacing[0]
        c1 = (pts[k, 1] - origin[1]) / spacing[1]
        c2 = (pts[k, 2] - origin[2]) / spacing[2]
        out0 = c0 < 0.0 or c0 > n0 - 1.0
        out1 = c1 < 0.0 or c1 > n1 - 1.0
        out2 = c2 < 0.0 or c2 > n2 - 1.0
        c0 = min(max(c0, 0.0), n0 - 1.0)
        c1 = min(max(c1, 0.0), n1 - 1.0)
        c2 = min(max(c2, 0.0), n2 - 1.0)
        i0 = min(int(c0), n0 - 2)
        i1 = min(int(c1), n1 - 2)
        i2 = min(int(c2), n2 - 2)
        f0 = c0 - i0
        f1 = c1 - i1
        f2 = c2 - i2
        v000 = values[i0, i1, i2]
        v001 = values[i0, i1, i2 + 1]
        v010 = values[i0, i1 + 1, i2]
        v011 = values[i0, i1 + 1, i2 + 1]
        v100 = values[i0 + 1, i1, i2]
        v101 = values[i0 + 1, i1, i2 + 1]
        v110 = values[i0 + 1, i1 + 1, i2]
        v111 = values[i0 + 1, i1 + 1, i2 + 1]
        w00 = v000 * (1.0 - f2) + v001 * f2
        w01 = v010 * (1.0 - f2) + v011 * f2
        w10 = v100 * (1.0 - f2) + v101 * f2
        w11 = v110 * (1.0 - f2) + v111 * f2
        lo = w00 * (1.0 - f1) + w01 * f1
        hi = w10 * (1.0 - f1) + w11 * f1
        vals[k] = lo * (1.0 - f0) + hi * f0
        grads[k, 0] = 0.0 if out0 else (hi - lo) / spacing[0]
        grads[k, 1] = 0.0 if out1 else (
            (w01 - w00) * (1.0 - f0) + (w11 - w10) * f0) / spacing[1]
        d00 = v001 - v000
        d01 = v011 - v010
        d10 = v101 - v100
        d11 = v111 - v110
        grads[k, 2] = 0.0 if out2 else (
            (d00 * (1.0 - f1) + d01 * f1) * (1.0 - f0)
            + (d10 * (1.0 - f1) + d11 * f1) * f0) / spacing[2]
    return vals, grads


@njit(cache=True)
def backward_gate(gw, act, g_out, db_out):
    n, m = gw.shape
    for j in range(m):
        db_out[j] = 0.0
    for i in range(n):
        for j in range(m):
            v = gw[i, j] * (1.0 - act[i, j] * act[i, j])
            g_out[i, j] = v
            db_out[j] += v


@njit(cache=True)
def _ray_cast_single(verts, faces, p, direction, eps):
    count = 0
    for f in range(faces.shape[0]):
        a0 = faces[f, 0]
        a1 = faces[f, 1]
        a2 = faces[f, 2]
        e1x = verts[a1, 0] - verts[a0, 0]
        e1y = verts[a1, 1] - verts[a0, 1]
        e1z = verts[a1, 2] - verts[a0, 2]
        e2x = verts[a2, 0] - verts[a0, 0]
        e2y = verts[a2, 1] - verts[a0, 1]
        e2z = verts[a2, 2] - verts[a0, 2]
        hx = direction[1] * e2z - direction[2] * e2y
        hy = direction[2] * e2x - direction[0] * e2z
        hz = direction[0] * e2y - direction[1] * e2x
        det = e1x * hx + e1y * hy + e1z * hz
        sx = p[0] - verts[a0, 0]
        sy = p[1] - verts[a0, 1]
        sz = p[2] - verts[a0, 2]
        nx = e1y * e2z - e1z * e2y
        ny = e1z * e2x - e1x * e2z
        nz = e1x * e2y - e1y * e2x
        nrm = np.sqrt(nx * nx + ny * ny + nz * nz)
        tolerance = eps * max(nrm, eps)
        if abs(det) <= tolerance:
            if abs(sx * nx + sy * ny + sz * nz) <= tolerance:
                return False, True
            continue
        inv = 1.0 / det
        u = (sx * hx + sy * hy + sz * hz) * inv
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = (qx * direction[0] + qy * direction[1] + qz * direction[2]) * inv
        t = (qx * e2x + qy * e2y + qz * e2z) * inv
        if u > eps and v > eps and u + v < 1.0 - eps and t > eps:
            count += 1
        elif u > -eps and v > -eps and u + v < 1.0 + eps and t > -eps:
            return False, True
    return count % 2 == 1, False


@njit(cache=True)
def ray_cast_inside(verts, faces, pts):
    scale = 0.0
    for a in range(3):
        ext = np.max(verts[:, a]) - np.min(verts[:, a])
        if ext > scale:
            scale = ext
    eps = 1e-12 * max(scale, 1.0)
    out = np.zeros(pts.shape[0], dtype=np.bool_)
    ndirs = RAY_DIRECTIONS.shape[0]
    for i in range(pts.shape[0]):
        inside = False
        for d in range(ndirs):
            inside, degenerate = _ray_cast_single(verts, faces, pts[i],
                                                  RAY_DIRECTIONS[d], eps)
            if not degenerate:
                break
        out[i] = inside
    return out
