"""Strain energies, strain measures and the ventricular direction frame.

Neo-Hookean energy of a deformation gradient F (d = 2 or 3):

    W = Tr(F^T F) - d - 2 log(det F) + lambda (det F - 1)^2

W(I) = 0, and the lambda term vanishes exactly on volume-preserving
deformations, so lambda sets how strongly local volume change is
penalized. Inverted configurations (det F <= 0) report +inf energy; the
training path instead receives a finite repelling gradient evaluated at a
clamped determinant (see ``neo_hookean_batch``), which keeps optimizer
steps finite without hiding the inversion from diagnostics.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError

J_CLAMP = 1e-6


@dataclass(frozen=True)
class NeoHookeanParams:
    lambda_inc: float
    lambda_bg: float
    dimension: int

    def __post_init__(self):
        if self.lambda_inc < 0 or self.lambda_bg < 0:
            raise ValueError("penalty weights must be >= 0")
        if self.lambda_inc < self.lambda_bg:
            raise ValueError("tissue must be penalized at least as strongly as background")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")


@dataclass(frozen=True)
class DirectionFrame:
    l: np.ndarray  # longitudinal
    r: np.ndarray  # radial
    c: np.ndarray  # circumferential


def neo_hookean(F: np.ndarray, lam: float) -> float:
    """Energy of a single deformation gradient; +inf if det F <= 0."""
    F = np.asarray(F, dtype=np.float64)
    d = F.shape[0]
    J = float(np.linalg.det(F))
    if J <= 0.0:
        return float("inf")
    trC = float(np.sum(F * F))
    return trC - d - 2.0 * np.log(J) + lam * (J - 1.0) ** 2


def _cofactor_batch(F: np.ndarray) -> np.ndarray:
    """cof(F) with dJ/dF = cof(F); finite even for singular F."""
    d = F.shape[-1]
    if d == 2:
        cof = np.empty_like(F)
        cof[:, 0, 0] = F[:, 1, 1]
        cof[:, 0, 1] = -F[:, 1, 0]
        cof[:, 1, 0] = -F[:, 0, 1]
        cof[:, 1, 1] = F[:, 0, 0]
        return cof
    c0, c1, c2 = F[:, :, 0], F[:, :, 1], F[:, :, 2]
    return np.stack((np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)), axis=2)


def neo_hookean_batch(F: np.ndarray, lam):
    """Energies and dW/dF for a batch of gradients (N, d, d).

    Returns (W (N,), dWdF (N, d, d), inverted (N,) bool). Inverted entries
    carry the finite clamped-J energy value in W and keep only the volume
    branch of the gradient, 2 lambda (J_CLAMP - 1) cof(F): the log branch
    would be infinite and is dropped.
    """
    F = np.asarray(F, dtype=np.float64)
    n, d, _ = F.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (n,))
    J = np.linalg.det(F)
    inverted = J <= 0.0
    Jc = np.where(inverted, J_CLAMP, J)
    trC = np.einsum("nij,nij->n", F, F)
    W = trC - d - 2.0 * np.log(Jc) + lam * (Jc - 1.0) ** 2
    cof = _cofactor_batch(F)
    vol = (2.0 * lam * (Jc - 1.0))[:, None, None] * cof
    good = ~inverted
    dWdF = np.zeros_like(F)
    dWdF[good] = 2.0 * F[good] - (2.0 / Jc[good])[:, None, None] * cof[good] + vol[good]
    dWdF[inverted] = vol[inverted]
    return W, dWdF, inverted


def green_lagrange(F: np.ndarray) -> np.ndarray:
    """E = (F^T F - I) / 2, symmetric, zero for any rigid motion."""
    F = np.asarray(F, dtype=np.float64)
    return 0.5 * (F.T @ F - np.eye(F.shape[0]))


def project_strain(E: np.ndarray, p: np.ndarray) -> float:
    """Normal strain along the unit direction p: p^T E p."""
    p = np.asarray(p, dtype=np.float64)
    nrm = np.linalg.norm(p)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"direction must be unit length, |p| = {nrm}")
    return float(p @ E @ p)


def build_frame(node_normal, longitudinal=(0.0, 0.0, 1.0)) -> DirectionFrame:
    """Orthonormal (l, r, c) frame from a surface normal.

    Radial = normal with its longitudinal component removed, then
    normalized; circumferential = l x r. Normals parallel to l have no
    radial direction and raise DegenerateGeometryError.
    """
    e = np.asarray(node_normal, dtype=np.float64)
    l = np.asarray(longitudinal, dtype=np.float64)
    l = l / np.linalg.norm(l)
    r = e - (e @ l) * l
    nrm = np.linalg.norm(r)
    if nrm < 1e-10:
        raise DegenerateGeometryError("node normal is parallel to the longitudinal axis")
    r = r / nrm
    c = np.cross(l, r)
    c = c / np.linalg.norm(c)
    return DirectionFrame(l=l, r=r, c=c)
