"""Periodic grids on T^n and Gram-form operator assembly.

Both operator families are built from the same discrete gradient.  At node
``p`` and for each of the ``2**n`` orientations ``s`` the one-sided covector

    xi_s(p)_i = s_i * (u(p + s_i e_i) - u(p)) / h

is formed, and a node-local symmetric matrix field ``M`` defines

    Q(u) = vol_cell * 2**-n * sum_p sum_s xi_s(p)^T M(p) xi_s(p).

The assembled matrix ``A`` satisfies ``Q(u) = vol_cell * u^T A u``, so its
eigenvalues are those of the discrete operator with the lumped mass
``vol_cell * I``.  Summing over orientations collapses to

    A = 1/2 sum_i sum_(s=+-) D_(s,i)^T M_ii D_(s,i)
        + sum_(i != j) C_i^T M_ij C_j,

with one-sided differences ``D`` on the diagonal and centered differences
``C`` off it.  The stencil has ``1 + 2n + 2n(n-1)`` entries per row.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .vectorfield import VectorField


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    """``N`` nodes per axis on ``(R / 2 pi Z)^n``, row-major flat indexing."""

    n: int
    N: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.N < 4 or self.N % 2:
            raise ValueError(f"N must be even and >= 4, got {self.N}")

    @property
    def h(self) -> float:
        return 2 * np.pi / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N ** self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def index(self, multi) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.mod(np.asarray(multi).T, self.N)),
                                    self.shape)

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.shape), axis=-1)

    def neighbor(self, flat, axis: int, step: int = 1):
        m = self.multi_index(np.asarray(flat))
        m[..., axis] += step
        return self.index(m)

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, n)``."""
        axes = np.arange(self.N) * self.h
        mesh = np.meshgrid(*([axes] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def shift(self, axis: int, step: int) -> sp.csr_matrix:
        """``(S u)(p) = u(p + step * e_axis)``."""
        idx = np.arange(self.size).reshape(self.shape)
        cols = np.roll(idx, -step, axis=axis).ravel()
        return sp.csr_matrix((np.ones(self.size), (np.arange(self.size), cols)),
                             shape=(self.size, self.size))

    def roll(self, u: np.ndarray, axis: int, step: int) -> np.ndarray:
        """Array version of :meth:`shift`."""
        return np.roll(u.reshape(self.shape), -step, axis=axis).ravel()


def make_grid(n: int, N: int) -> PeriodicGrid:
    return PeriodicGrid(n, N)


def one_sided(grid: PeriodicGrid, axis: int, sign: int) -> sp.csr_matrix:
    """``sign * (u(p + sign e_axis) - u(p)) / h``."""
    I = sp.identity(grid.size, format="csr")
    return (sign / grid.h) * (grid.shift(axis, sign) - I)


def centered(grid: PeriodicGrid, axis: int) -> sp.csr_matrix:
    return (grid.shift(axis, 1) - grid.shift(axis, -1)) / (2 * grid.h)


def field_values(grid: PeriodicGrid, fields: Sequence[VectorField]) -> np.ndarray:
    """Shape ``(len(fields), size, n)``."""
    for X in fields:
        if X.dim != grid.n:
            raise AssemblyError("field dimension does not match the grid")
    return np.stack([X(grid.points) for X in fields])


def assemble_vector_derivative(grid: PeriodicGrid, X: VectorField) -> sp.csr_matrix:
    """Centered directional derivative ``sum_i X^i(p) (u(p+e_i)-u(p-e_i))/2h``."""
    vals = field_values(grid, [X])[0]
    D = sp.csr_matrix((grid.size, grid.size))
    for i in range(grid.n):
        if np.any(vals[:, i]):
            D = D + sp.diags(vals[:, i]) @ centered(grid, i)
    return D.tocsr()


def oriented_derivative(grid: PeriodicGrid, X: VectorField,
                        signs: Sequence[int]) -> sp.csr_matrix:
    """``X(p) . xi_s(p)`` as a sparse operator, for one orientation."""
    vals = field_values(grid, [X])[0]
    D = sp.csr_matrix((grid.size, grid.size))
    for i, s in enumerate(signs):
        if np.any(vals[:, i]):
            D = D + sp.diags(vals[:, i]) @ one_sided(grid, i, s)
    return D.tocsr()


def orientations(n: int) -> Iterator[tuple]:
    return itertools.product((1, -1), repeat=n)


def covectors(grid: PeriodicGrid, u: np.ndarray) -> Iterator[np.ndarray]:
    """Yield ``xi_s`` (shape ``(size, n)``) for every orientation ``s``."""
    u = np.asarray(u, dtype=float).ravel()
    fwd = [(grid.roll(u, i, 1) - u) / grid.h for i in range(grid.n)]
    bwd = [(u - grid.roll(u, i, -1)) / grid.h for i in range(grid.n)]
    for signs in orientations(grid.n):
        yield np.stack([fwd[i] if s > 0 else bwd[i]
                        for i, s in enumerate(signs)], axis=1)


@dataclass
class SparseSymmetric:
    matrix: sp.csr_matrix
    kind: str = ""

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def symmetric(self) -> bool:
        d = self.matrix - self.matrix.T
        return d.nnz == 0 or np.abs(d.data).max() == 0.0

    def __matmul__(self, u):
        return self.matrix @ u

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def row_sum_defect(self) -> float:
        """Largest ``|A 1|`` relative to the largest entry."""
        s = np.abs(self.matrix @ np.ones(self.shape[0])).max()
        return float(s / np.abs(self.matrix.data).max())

    def export_triplets(self, path) -> None:
        """Write ``row col value`` lines."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v:.17g}\n")


def assemble_gram_form(grid: PeriodicGrid, coeff: np.ndarray,
                       kind: str = "") -> SparseSymmetric:
    """Matrix of the orientation-averaged form for node matrices ``coeff``.

    ``coeff`` has shape ``(size, n, n)`` and must be symmetric positive
    semidefinite at every node for the result to be PSD.
    """
    n = grid.n
    if coeff.shape != (grid.size, n, n):
        raise AssemblyError(
            f"coefficient field has shape {coeff.shape}, expected "
            f"{(grid.size, n, n)}")
    C = [centered(grid, i) for i in range(n)]
    A = sp.csr_matrix((grid.size, grid.size))
    for i in range(n):
        m = coeff[:, i, i]
        if not np.any(m):
            continue
        Mi = sp.diags(m)
        for s in (1, -1):
            D = one_sided(grid, i, s)
            A = A + 0.5 * (D.T @ Mi @ D)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            m = coeff[:, i, j]
            if not np.any(m):
                continue
            A = A + C[i].T @ sp.diags(m) @ C[j]
    A = A.tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    A.eliminate_zeros()
    return SparseSymmetric(A, kind)


def _check_spd(coeff: np.ndarray, what: str, grid: PeriodicGrid) -> None:
    ev = np.linalg.eigvalsh(coeff)
    bad = np.nonzero(ev[:, 0] <= 0)[0]
    if bad.size:
        node = int(bad[0])
        raise AssemblyError(
            f"{what} is not positive definite at node {node} "
            f"(multi-index {grid.multi_index(node).tolist()}), "
            f"smallest eigenvalue {ev[node, 0]:.3e}")


def assemble_laplace_beltrami(grid: PeriodicGrid, metric,
                              det_tol: float = 1e-10) -> SparseSymmetric:
    """Discrete Laplace-Beltrami operator of a unit-determinant metric field.

    The volume density is taken to be 1; nodes where ``|det g - 1|`` exceeds
    ``det_tol`` abort the assembly.
    """
    if metric.grid != grid:
        raise AssemblyError("metric field lives on a different grid")
    dets = np.linalg.det(metric.g)
    worst = int(np.argmax(np.abs(dets - 1)))
    if abs(dets[worst] - 1) > det_tol:
        raise AssemblyError(
            f"det g = {dets[worst]!r} at node {worst}: volume form changed")
    _check_spd(metric.ginv, "inverse metric", grid)
    return assemble_gram_form(grid, metric.ginv, kind="laplace-beltrami")


def sub_laplacian_coefficients(grid: PeriodicGrid,
                               fields: Sequence[VectorField]) -> np.ndarray:
    vals = field_values(grid, fields)
    return np.einsum("fpi,fpj->pij", vals, vals)


def assemble_sub_laplacian(grid: PeriodicGrid,
                           fields: Sequence[VectorField]) -> SparseSymmetric:
    """``sum_j D_j^T D_j`` over oriented directional derivatives."""
    return assemble_gram_form(grid, sub_laplacian_coefficients(grid, fields),
                              kind="sub-laplacian")


def flat_eigenvalues(grid: PeriodicGrid) -> np.ndarray:
    """All eigenvalues of the flat operator, ascending."""
    k = np.arange(grid.N)
    sym = (2 - 2 * np.cos(2 * np.pi * k / grid.N)) / grid.h ** 2
    mesh = np.meshgrid(*([sym] * grid.n), indexing="ij")
    return np.sort(sum(mesh).ravel())


def flat_lambda1(N: int) -> float:
    """``(2 - 2 cos(2 pi / N)) / (2 pi / N)^2``."""
    h = 2 * np.pi / N
    return (2 - 2 * np.cos(h)) / h ** 2
