"""Compare the numba kernels against their pure-numpy twins.

Run:  python benchmarks/bench_kernels.py

Exercises the backend-switched kernels (interpolation, the backward tanh
gate, ray casting) on training-representative shapes. The dense-network
matmul/tanh passes are intentionally not switched: BLAS and numpy's
vectorized tanh beat serial @njit loops on those, which this script also
demonstrates.
"""

import time

import numpy as np

from warpreg._kernels import numba_impl, numpy_impl
from warpreg import autodiff
from warpreg.ringbench import RingSpec, annular_shell_mesh


def best_of(fn, repeats=7):
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def row(name, numpy_ms, numba_ms):
    print(f"{name:34s} numpy {numpy_ms:8.3f} ms   numba {numba_ms:8.3f} ms   "
          f"speedup {numpy_ms / numba_ms:5.2f}x")


def main():
    rng = np.random.default_rng(0)

    img2 = rng.standard_normal((256, 256))
    pts2 = rng.uniform(0.0, 1.0, (65536, 2))
    org2 = np.zeros(2)
    sp2 = np.full(2, 1.0 / 255.0)
    row("interp2_sample (65536 pts)",
        best_of(lambda: numpy_impl.interp2_sample(img2, org2, sp2, pts2)),
        best_of(lambda: numba_impl.interp2_sample(img2, org2, sp2, pts2)))

    img3 = rng.standard_normal((64, 64, 8))
    pts3 = rng.uniform(0.0, 1.0, (32768, 3)) * np.array([1.0, 1.0, 0.25])
    org3 = np.zeros(3)
    sp3 = np.array([1.0 / 63, 1.0 / 63, 0.25 / 7])
    row("interp3_sample (32768 pts)",
        best_of(lambda: numpy_impl.interp3_sample(img3, org3, sp3, pts3)),
        best_of(lambda: numba_impl.interp3_sample(img3, org3, sp3, pts3)))

    gw = rng.standard_normal((65536, 32))
    act = np.tanh(rng.standard_normal((65536, 32)))
    g_out = np.empty_like(gw)
    db = np.empty(32)
    row("backward_gate (65536 x 32)",
        best_of(lambda: numpy_impl.backward_gate(gw, act, g_out, db)),
        best_of(lambda: numba_impl.backward_gate(gw, act, g_out, db)))

    mesh = annular_shell_mesh(RingSpec(), 0.05, 0.2, n_theta=40, n_z=4)
    pts = rng.uniform([0, 0, 0], [1, 1, 0.25], (2000, 3))
    row(f"ray_cast_inside ({len(mesh.faces)} faces)",
        best_of(lambda: numpy_impl.ray_cast_inside(mesh.vertices, mesh.faces, pts), 3),
        best_of(lambda: numba_impl.ray_cast_inside(mesh.vertices, mesh.faces, pts), 3))

    # context: the unswitched dense-network passes at the 2D benchmark size
    net = autodiff.init_xavier([16, 32, 32, 32, 2], 0)
    X = rng.uniform(-1, 1, (65536, 16))
    ws = autodiff.Workspace(net, 65536)
    cot = rng.standard_normal((65536, 2))
    autodiff.forward_ws(net, X, ws)
    print(f"{'forward_ws  (numpy/BLAS only)':34s} numpy "
          f"{best_of(lambda: autodiff.forward_ws(net, X, ws)):8.3f} ms")
    print(f"{'backward_ws (numpy/BLAS + gate)':34s} numpy "
          f"{best_of(lambda: autodiff.backward_ws(net, X, ws, cot)):8.3f} ms")


if __name__ == "__main__":
    main()
