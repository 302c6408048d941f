"""Discrete anisotropic energies, Poincare constants and the lambda_1 bound.

Directional derivatives ``X u`` are taken with the same oriented one-sided
covectors that build the Gram-form operators (see ``discretize``), so that
``E_{X,2}`` and the sub-Laplacian are exactly consistent and the Hoelder
chain below is an exact discrete inequality.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .discretize import (PeriodicGrid, assemble_sub_laplacian, covectors,
                         field_values)
from .eigensolve import lowest_eigenpairs
from .vectorfield import VectorField

CSV_SCHEMA = "# schema: poincare v1"


def admissible_p_range(r: int, n: int) -> tuple:
    """Open interval ``(2 - 4/(r n + 2), 2)``."""
    if r < 1 or n < 1:
        raise ValueError("r and n must be positive")
    return (2 - 4 / (r * n + 2), 2.0)


def _lp(values: np.ndarray, p: float, weight: float) -> float:
    return float((np.sum(np.abs(values) ** p) * weight) ** (1 / p))


def directional_lp(grid: PeriodicGrid, X: np.ndarray, u, p: float,
                   stencil: str = "oriented") -> float:
    """``||X u||_{L^p}`` for node values ``X`` (shape ``(size, n)``).

    ``oriented`` averages ``|X . xi_s|^p`` over the ``2**n`` one-sided
    covectors; ``centered`` uses the central difference.
    """
    if stencil == "centered":
        u = np.asarray(u, dtype=float).ravel()
        du = sum(X[:, i] * (grid.roll(u, i, 1) - grid.roll(u, i, -1))
                 / (2 * grid.h) for i in range(grid.n))
        return _lp(du, p, grid.cell_volume)
    if stencil != "oriented":
        raise ValueError(f"unknown stencil {stencil!r}")
    total = 0.0
    for xi in covectors(grid, u):
        total += np.sum(np.abs(np.einsum("pi,pi->p", xi, X)) ** p)
    return float((total * grid.cell_volume / 2 ** grid.n) ** (1 / p))


def energy(grid: PeriodicGrid, fields: Sequence[VectorField], u, p: float,
           stencil: str = "oriented", values: np.ndarray | None = None) -> float:
    """``E_{X,p}(u) = sum_j ||X_j u||_{L^p}``."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    vals = field_values(grid, fields) if values is None else values
    return sum(directional_lp(grid, X, u, p, stencil) for X in vals)


def quadratic_energy(grid: PeriodicGrid, fields, u, values=None) -> float:
    """``(sum_j ||X_j u||_2^2)^(1/2)``, the form of the sub-Laplacian."""
    vals = field_values(grid, fields) if values is None else values
    return float(np.sqrt(sum(directional_lp(grid, X, u, 2) ** 2 for X in vals)))


def lp_norm(grid: PeriodicGrid, u, q: float) -> float:
    return _lp(np.asarray(u, dtype=float), q, grid.cell_volume)


def sup_field_norm(fields: Sequence[VectorField], grid: PeriodicGrid,
                   values: np.ndarray | None = None) -> float:
    """``K = max_{nodes, j} g_1(X_j, X_j)``."""
    vals = field_values(grid, fields) if values is None else values
    return float(np.max(np.sum(vals ** 2, axis=-1)))


def band_limited(grid: PeriodicGrid, rng: np.random.Generator,
                 modes: int = 6, max_freq: int | None = None) -> np.ndarray:
    """Random trigonometric polynomial with frequencies ``<= N/4`` per axis."""
    kmax = grid.N // 4 if max_freq is None else max_freq
    u = np.zeros(grid.size)
    for _ in range(modes):
        k = rng.integers(-kmax, kmax + 1, size=grid.n)
        if not k.any():
            k[rng.integers(grid.n)] = 1
        phase = grid.points @ k
        a, b = rng.standard_normal(2)
        u += a * np.cos(phase) + b * np.sin(phase)
    return u


def seeded_test_functions(grid: PeriodicGrid, count: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [band_limited(grid, rng) for _ in range(count)]


@dataclass
class PoincareReport:
    p: float
    q: float
    count: int
    empirical_constant: float
    exact_constant: float | None
    violations: int
    witnesses: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    lambda1: float | None = None

    def to_json(self) -> dict:
        return {
            "p": self.p, "q": self.q, "test_functions": self.count,
            "empirical_constant": self.empirical_constant,
            "exact_constant": self.exact_constant,
            "lambda1_sub_laplacian": self.lambda1,
            "violations": self.violations,
            "hormander_witnesses": len(self.witnesses),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(CSV_SCHEMA + "\n")
            w = csv.writer(fh)
            w.writerow(["index", "norm_q", "energy_p", "ratio", "bound",
                        "slack"])
            for r in self.rows:
                w.writerow([r["index"]] + [repr(float(r[k])) for k in
                            ("norm_q", "energy_p", "ratio", "bound", "slack")])


def estimate_constant(grid: PeriodicGrid, fields: Sequence[VectorField],
                      p: float, q: float, test_fns: Iterable[np.ndarray],
                      slack_tol: float = 1e-8, eig_tol: float = 1e-8,
                      seed: int = 0) -> PoincareReport:
    """Empirical ``sup ||u - mean||_q / E_{X,p}(u)``.

    For ``p = q = 2`` the discrete constant ``lambda_1^{-1/2}`` of the
    sub-Laplacian is also computed and every test function is checked
    against it.
    """
    if p <= 1 or q <= 1:
        raise ValueError("p and q must exceed 1")
    vals = field_values(grid, fields)
    exact = lam = None
    if p == 2 and q == 2:
        A = assemble_sub_laplacian(grid, fields)
        lam = lowest_eigenpairs(A, 1, tol=eig_tol, seed=seed).lambda1
        exact = lam ** -0.5
    best = 0.0
    rows, witnesses = [], []
    violations = 0
    count = 0
    for i, u in enumerate(test_fns):
        count += 1
        u0 = u - u.mean()
        nrm = lp_norm(grid, u0, q)
        E = energy(grid, fields, u0, p, values=vals)
        if E <= 1e-14 * max(nrm, 1e-300):
            if nrm > 1e-12:
                witnesses.append(i)
            continue
        ratio = nrm / E
        best = max(best, ratio)
        bound = exact * E if exact is not None else np.nan
        slack = bound - nrm if exact is not None else np.nan
        if exact is not None and slack < -slack_tol * bound:
            violations += 1
        rows.append({"index": i, "norm_q": nrm, "energy_p": E, "ratio": ratio,
                     "bound": bound, "slack": slack})
    return PoincareReport(p, q, count, best, exact, violations, witnesses,
                          rows, lam)


def lambda1_lower_bound(Cp: float, n_fields: int, K: float,
                        inv_phi: float) -> float:
    """``(C_p N)^{-2} K^{-1} ||1/phi||^{-1}``."""
    if min(Cp, n_fields, K, inv_phi) <= 0:
        raise ValueError("all inputs must be positive")
    return 1.0 / ((Cp * n_fields) ** 2 * K * inv_phi)


@dataclass
class ChainReport:
    left: float
    right: float
    slack: float
    ok: bool
    parts: dict = field(default_factory=dict)


def gradient_energy(grid: PeriodicGrid, metric, u) -> float:
    """``int ||grad_phi u||_phi^2`` with the node inverse metric."""
    total = 0.0
    for xi in covectors(grid, u):
        total += np.einsum("pi,pij,pj->", xi, metric.ginv, xi)
    return float(total * grid.cell_volume / 2 ** grid.n)


def verify_estimate_chain(grid: PeriodicGrid, fields: Sequence[VectorField],
                          metric, phi: np.ndarray, u, p: float,
                          K: float | None = None, tol: float = 1e-8,
                          values: np.ndarray | None = None,
                          operator=None) -> ChainReport:
    """Check ``sum_j ||X_j u||_p <= N sqrt(K) ||grad_phi u||_2 ||1/phi||^(1/2)``.

    The norm of ``1/phi`` is taken in ``L^{p/(2-p)}``.  Passing the assembled
    Laplace-Beltrami ``operator`` evaluates the gradient energy as
    ``vol_cell * u^T A u``, which equals the covector sum exactly.
    """
    from .quasikahler import inv_phi_norm

    if not 1 < p < 2:
        raise ValueError("p must lie in (1, 2)")
    vals = field_values(grid, fields) if values is None else values
    if K is None:
        K = sup_field_norm(fields, grid, vals)
    u0 = np.asarray(u, dtype=float) - np.mean(u)
    left = energy(grid, fields, u0, p, values=vals)
    if operator is not None:
        M = operator.matrix if hasattr(operator, "matrix") else operator
        grad = float(u0 @ (M @ u0)) * grid.cell_volume
    else:
        grad = gradient_energy(grid, metric, u0)
    ipn = inv_phi_norm(phi, p, grid)
    right = len(vals) * np.sqrt(K) * np.sqrt(grad) * np.sqrt(ipn)
    slack = right - left
    return ChainReport(left, right, slack, bool(slack >= -tol * right),
                       {"K": K, "grad_energy": grad, "inv_phi_norm": ipn})
