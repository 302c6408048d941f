"""Flat quasi-Kaehler structure on T^n and its deformation along span(V, W).

With ``g_1 = I`` and a g_1-orthonormal frame ``e`` of the isotropic plane
``L``, the deformed complex structure is ``(1/phi) J_1`` on ``L``,
``phi J_1`` on ``J_1 L`` and ``J_1`` on the complement, and the metric
``g_phi(v, w) = omega(v, J_phi w)`` is

    g_phi = I + (1/phi - 1) P_L + (phi - 1) P_{J_1 L}

where ``P`` are orthogonal projectors.  Its determinant is 1.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .discretize import PeriodicGrid, field_values
from .hormander import SingularReport
from .vectorfield import VectorField

SPAN_TOL = 1e-8


class DeformationError(ValueError):
    pass


@dataclass(frozen=True)
class BaseStructure:
    omega: np.ndarray
    J: np.ndarray
    g: np.ndarray

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    def pairing(self, v, w):
        """``omega(v, w)`` for row-stacked vectors."""
        return np.einsum("...i,ij,...j->...", v, self.omega, w)


def base_structure(n: int) -> BaseStructure:
    """Standard structure pairing ``(x, y)``, ``(z1, z2)``, ...

    ``J e_(2k) = e_(2k+1)``, ``omega = dx^dy + dz1^dz2 + ...``, ``g = I``.
    """
    if n < 4 or n % 2:
        raise ValueError(f"dimension must be even and >= 4, got {n}")
    J = np.zeros((n, n))
    for k in range(0, n, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    omega = -J
    return BaseStructure(omega, J, omega @ J)


def isotropy_check(V: VectorField, W: VectorField, base: BaseStructure,
                   samples) -> float:
    """max over samples of ``|omega(V,W)|``, ``|omega(V,V)|``, ``|omega(W,W)|``."""
    pts = np.atleast_2d(samples)
    if V.dim != base.n or W.dim != base.n:
        raise ValueError("field dimension does not match the structure")
    v, w = V(pts), W(pts)
    return float(max(np.abs(base.pairing(v, w)).max(),
                     np.abs(base.pairing(v, v)).max(),
                     np.abs(base.pairing(w, w)).max()))


# -- bump profile -----------------------------------------------------------

def smoothstep(t):
    """Quintic ``6t^5 - 15t^4 + 10t^3`` clamped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6 * t - 15) + 10)


@dataclass
class BumpProfile:
    phi_max: float
    delta: float
    values: np.ndarray
    distance: np.ndarray

    def __call__(self, dist):
        return bump_value(dist, self.delta, self.phi_max)


def bump_value(dist, delta: float, phi_max: float):
    """1 within ``delta`` of the locus, ``phi_max`` beyond ``2 delta``."""
    if not np.isfinite(delta) or delta <= 0:
        return np.full_like(np.asarray(dist, dtype=float), phi_max)
    return 1.0 + (phi_max - 1.0) * smoothstep((np.asarray(dist) - delta) / delta)


def build_bump(singular: SingularReport, delta: float, phi_max: float,
               grid: PeriodicGrid) -> BumpProfile:
    if phi_max < 1:
        raise DeformationError("phi_max must be >= 1")
    if singular.empty:
        vals = np.full(grid.size, float(phi_max))
        return BumpProfile(phi_max, delta, vals, np.full(grid.size, np.inf))
    if not delta > 0:
        raise DeformationError("delta must be positive when the singular "
                               "set is nonempty")
    if 2 * delta >= singular.max_distance():
        raise DeformationError(
            f"2*delta = {2 * delta:.4g} leaves no plateau: every point lies "
            f"within {singular.max_distance():.4g} of the singular set")
    dist = singular.distance(grid.points)
    return BumpProfile(phi_max, delta, bump_value(dist, delta, phi_max), dist)


# -- deformed metric --------------------------------------------------------

def _frames(v: np.ndarray, w: np.ndarray, tol: float):
    """Orthonormal ``e1, e2`` of span(v, w) row-wise; ``ok`` flags rank 2."""
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    e1 = v / np.where(nv > tol, nv, 1.0)
    w2 = w - np.sum(w * e1, axis=-1, keepdims=True) * e1
    nw = np.linalg.norm(w2, axis=-1, keepdims=True)
    e2 = w2 / np.where(nw > tol, nw, 1.0)
    ok = (nv[..., 0] > tol) & (nw[..., 0] > tol)
    return e1, e2, ok


def _deformed(e1, e2, phi, J, inverse: bool):
    n = J.shape[0]
    je1 = e1 @ J.T
    je2 = e2 @ J.T
    PL = np.einsum("pi,pj->pij", e1, e1) + np.einsum("pi,pj->pij", e2, e2)
    PJ = np.einsum("pi,pj->pij", je1, je1) + np.einsum("pi,pj->pij", je2, je2)
    a = (phi - 1.0) if inverse else (1.0 / phi - 1.0)
    b = (1.0 / phi - 1.0) if inverse else (phi - 1.0)
    return np.eye(n) + a[:, None, None] * PL + b[:, None, None] * PJ


def metric_at(p, Vp, Wp, phip: float, base: BaseStructure,
              tol: float = SPAN_TOL) -> np.ndarray:
    """``g_phi`` at one point from the field values ``Vp``, ``Wp``."""
    if phip < 1:
        raise DeformationError("phi must be >= 1")
    if phip == 1:
        return base.g.copy()
    e1, e2, ok = _frames(np.atleast_2d(Vp), np.atleast_2d(Wp), tol)
    if not ok[0]:
        raise DeformationError(
            f"span(V, W) is degenerate at {np.asarray(p).tolist()} but "
            f"phi = {phip} != 1")
    _check_isotropic(e1, e2, base)
    return _deformed(e1, e2, np.array([float(phip)]), base.J, False)[0]


def _check_isotropic(e1, e2, base, tol: float = 1e-10):
    w = np.abs(base.pairing(e1, e2))
    if w.max() > tol:
        raise DeformationError(
            f"distribution is not isotropic (|omega(e1,e2)| = {w.max():.2e})")


def J_phi(e1, e2, phi: float, base: BaseStructure) -> np.ndarray:
    """Matrix of the deformed almost complex structure at one point."""
    e1 = np.atleast_2d(e1)
    e2 = np.atleast_2d(e2)
    PL = e1.T @ e1 + e2.T @ e2
    je = np.vstack([e1, e2]) @ base.J.T
    PJ = je.T @ je
    PV = np.eye(base.n) - PL - PJ
    return base.J @ (PL / phi + phi * PJ + PV)


@dataclass
class MetricField:
    grid: PeriodicGrid
    g: np.ndarray
    ginv: np.ndarray
    phi: np.ndarray

    def max_det_defect(self) -> float:
        return float(np.abs(np.linalg.det(self.g) - 1).max())

    def dump_csv(self, path) -> None:
        """``node, g_ij for i <= j (row-major), phi`` per row."""
        n = self.grid.n
        iu = np.triu_indices(n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node"] + [f"g{i}{j}" for i, j in zip(*iu)] + ["phi"])
            for k in range(self.grid.size):
                w.writerow([k] + [repr(float(v)) for v in self.g[k][iu]]
                           + [repr(float(self.phi[k]))])


def metric_field(grid: PeriodicGrid, fields: Sequence[VectorField],
                 phi: np.ndarray, base: BaseStructure,
                 tol: float = SPAN_TOL) -> MetricField:
    """Evaluate ``g_phi`` and its exact inverse at every grid node."""
    V, W = fields
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.size,):
        raise DeformationError("phi must have one value per grid node")
    if np.any(phi < 1):
        raise DeformationError("phi must be >= 1")
    vals = field_values(grid, [V, W])
    e1, e2, ok = _frames(vals[0], vals[1], tol)
    deform = phi != 1
    bad = np.nonzero(deform & ~ok)[0]
    if bad.size:
        raise DeformationError(
            f"span(V, W) degenerate at node {int(bad[0])} where "
            f"phi = {phi[bad[0]]}; phi must be 1 near the singular set")
    g = np.broadcast_to(np.eye(grid.n), (grid.size, grid.n, grid.n)).copy()
    ginv = g.copy()
    if deform.any():
        _check_isotropic(e1[deform], e2[deform], base)
        g[deform] = _deformed(e1[deform], e2[deform], phi[deform], base.J, False)
        ginv[deform] = _deformed(e1[deform], e2[deform], phi[deform], base.J,
                                 True)
    return MetricField(grid, g, ginv, phi)


def inv_phi_norm(phi: np.ndarray, p: float, grid: PeriodicGrid) -> float:
    """Discrete ``||1/phi||`` in ``L^s`` with ``s = p / (2 - p)``."""
    if not 1 < p < 2:
        raise ValueError(f"p must lie in (1, 2), got {p}")
    s = p / (2 - p)
    phi = np.asarray(phi, dtype=float)
    return float((np.sum(phi ** -s) * grid.cell_volume) ** (1 / s))
