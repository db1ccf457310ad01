"""Pure-numpy implementations of the hot kernels.

Reference semantics for the numba twins in ``numba_impl``: both backends
must agree to floating-point roundoff. Selected via WARPREG_BACKEND, see
``warpreg._kernels``.
"""

import numpy as np


def interp2_sample(values, origin, spacing, pts):
    """Bilinear interpolation with exact interpolant gradients.

    values: (n0, n1) array, axis k maps to physical axis k.
    pts: (N, 2) physical query points.
    Returns (vals (N,), grads (N, 2)). Out-of-domain queries clamp to the
    boundary cell and report zero gradient along the clamped axis.
    """
    n0, n1 = values.shape
    c0 = (pts[:, 0] - origin[0]) / spacing[0]
    c1 = (pts[:, 1] - origin[1]) / spacing[1]
    out0 = (c0 < 0.0) | (c0 > n0 - 1.0)
    out1 = (c1 < 0.0) | (c1 > n1 - 1.0)
    c0 = np.clip(c0, 0.0, n0 - 1.0)
    c1 = np.clip(c1, 0.0, n1 - 1.0)
    i0 = np.minimum(c0.astype(np.int64), n0 - 2)
    i1 = np.minimum(c1.astype(np.int64), n1 - 2)
    f0 = c0 - i0
    f1 = c1 - i1
    v00 = values[i0, i1]
    v01 = values[i0, i1 + 1]
    v10 = values[i0 + 1, i1]
    v11 = values[i0 + 1, i1 + 1]
    lo = v00 * (1.0 - f1) + v01 * f1
    hi = v10 * (1.0 - f1) + v11 * f1
    vals = lo * (1.0 - f0) + hi * f0
    g0 = (hi - lo) / spacing[0]
    g1 = ((v01 - v00) * (1.0 - f0) + (v11 - v10) * f0) / spacing[1]
    g0[out0] = 0.0
    g1[out1] = 0.0
    return vals, np.stack((g0, g1), axis=1)


def interp3_sample(values, origin, spacing, pts):
    """Trilinear twin of :func:`interp2_sample` for (n0, n1, n2) grids."""
    n0, n1, n2 = values.shape
    c0 = (pts[:, 0] - origin[0]) / spacing[0]
    c1 = (pts[:, 1] - origin[1]) / spacing[1]
    c2 = (pts[:, 2] - origin[2]) / spacing[2]
    out0 = (c0 < 0.0) | (c0 > n0 - 1.0)
    out1 = (c1 < 0.0) | (c1 > n1 - 1.0)
    out2 = (c2 < 0.0) | (c2 > n2 - 1.0)
    c0 = np.clip(c0, 0.0, n0 - 1.0)
    c1 = np.clip(c1, 0.0, n1 - 1.0)
    c2 = np.clip(c2, 0.0, n2 - 1.0)
    i0 = np.minimum(c0.astype(np.int64), n0 - 2)
    i1 = np.minimum(c1.astype(np.int64), n1 - 2)
    i2 = np.minimum(c2.astype(np.int64), n2 - 2)
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
    # collapse axis 2, then axis 1, then axis 0
    w00 = v000 * (1.0 - f2) + v001 * f2
    w01 = v010 * (1.0 - f2) + v011 * f2
    w10 = v100 * (1.0 - f2) + v101 * f2
    w11 = v110 * (1.0 - f2) + v111 * f2
    lo = w00 * (1.0 - f1) + w01 * f1
    hi = w10 * (1.0 - f1) + w11 * f1
    vals = lo * (1.0 - f0) + hi * f0
    g0 = (hi - lo) / spacing[0]
    g1 = ((w01 - w00) * (1.0 - f0) + (w11 - w10) * f0) / spacing[1]
    d00 = v001 - v000
    d01 = v011 - v010
    d10 = v101 - v100
    d11 = v111 - v110
    g2 = ((d00 * (1.0 - f1) + d01 * f1) * (1.0 - f0)
          + (d10 * (1.0 - f1) + d11 * f1) * f0) / spacing[2]
    g0[out0] = 0.0
    g1[out1] = 0.0
    g2[out2] = 0.0
    return vals, np.stack((g0, g1, g2), axis=1)


def backward_gate(gw, act, g_out, db_out):
    """Backward tanh gate: g_out = gw * (1 - act^2), db_out = column sums.

    One fused pass in the numba twin; here g_out doubles as scratch so no
    extra temporary is touched.
    """
    np.multiply(act, act, out=g_out)
    np.subtract(1.0, g_out, out=g_out)
    np.multiply(gw, g_out, out=g_out)
    g_out.sum(axis=0, out=db_out)


# Fixed ray directions for the parity test. The first is an arbitrary
# irrational-ish direction; the rest are fallbacks used only when a ray
# grazes an edge, vertex or coplanar face.
RAY_DIRECTIONS = np.array([
    [0.57357643635104609, 0.33682408883346515, 0.74670698157362078],
    [-0.29312841426379909, 0.84386308251954902, 0.44929674562697802],
    [0.80901699437494745, -0.50903696045512718, 0.29389262614623657],
    [0.10452846326765347, 0.64278760968653925, -0.75891211158376709],
    [-0.61566147532565829, -0.42261826174069944, 0.66546270854529519],
])


def _ray_cast_single(verts, faces, p, direction, eps):
    """Parity count along one ray. Returns (inside, degenerate_flag)."""
    a = verts[faces[:, 0]]
    e1 = verts[faces[:, 1]] - a
    e2 = verts[faces[:, 2]] - a
    h = np.cross(direction[None, :], e2)
    det = np.einsum("ij,ij->i", e1, h)
    s = p[None, :] - a
    # parallel rays: a graze within eps of the supporting plane is degenerate
    n = np.cross(e1, e2)
    nrm = np.linalg.norm(n, axis=1)
    plane_dist = np.abs(np.einsum("ij,ij->i", s, n))
    parallel = np.abs(det) <= eps * np.maximum(nrm, eps)
    if np.any(parallel & (plane_dist <= eps * np.maximum(nrm, eps))):
        return False, True
    ok = ~parallel
    inv = np.zeros(len(det))
    inv[ok] = 1.0 / det[ok]
    u = np.einsum("ij,ij->i", s, h) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,j->i", q, direction) * inv
    t = np.einsum("ij,ij->i", q, e2) * inv
    hit = ok & (u > eps) & (v > eps) & (u + v < 1.0 - eps) & (t > eps)
    grazing = ok & ~hit & (u > -eps) & (v > -eps) & (u + v < 1.0 + eps) & (t > -eps)
    if np.any(grazing):
        return False, True
    return int(np.count_nonzero(hit)) % 2 == 1, False


def ray_cast_inside(verts, faces, pts):
    """Point-in-closed-mesh parity test with deterministic ray jitter.

    Degenerate hits (edge or vertex grazes, in-plane rays) retry with the
    next direction from RAY_DIRECTIONS, so results do not depend on luck.
    """
    scale = float(np.max(np.ptp(verts, axis=0)))
    eps = 1e-12 * max(scale, 1.0)
    out = np.zeros(len(pts), dtype=np.bool_)
    for i in range(len(pts)):
        for d in range(len(RAY_DIRECTIONS)):
            inside, degenerate = _ray_cast_single(verts, faces, pts[i],
                                                  RAY_DIRECTIONS[d], eps)
            if not degenerate:
                out[i] = inside
                break
        else:
            out[i] = inside
    return out
