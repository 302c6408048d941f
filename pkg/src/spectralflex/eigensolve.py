"""Lowest eigenpairs of symmetric PSD operators by restarted Lanczos.

Each eigenpair is found by a thick-restart Lanczos run with full
reorthogonalization, working in the orthogonal complement of the constants
and of every previously converged eigenvector.  Locking one vector per run
resolves multiplicities that a single Krylov sequence cannot see.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ITER_CAP = 5000
REL_TOL = 1e-8
MULTIPLICITY_TOL = 1e-6


class ConvergenceError(RuntimeError):
    def __init__(self, msg, best_residual):
        super().__init__(msg)
        self.best_residual = best_residual


@dataclass
class SpectrumResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    norm_estimate: float
    deflation: str = "constants"
    runs: list = field(default_factory=list)

    @property
    def lambda1(self) -> float:
        return float(self.values[0])

    @property
    def multiplicity(self) -> int:
        return int(np.count_nonzero(
            np.abs(self.values - self.values[0]) <= MULTIPLICITY_TOL))

    def to_json(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.values],
            "lambda1": self.lambda1,
            "multiplicity": self.multiplicity,
            "residuals": [float(r) for r in self.residuals],
            "iterations": self.iterations,
            "norm_estimate": self.norm_estimate,
            "deflation": self.deflation,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _orth(w, blocks):
    for Q in blocks:
        if Q is not None and Q.shape[1]:
            w -= Q @ (Q.T @ w)
    return w


def _lanczos_lowest(A, locked, rng, tol, maxiter, m, keep):
    """One thick-restart run for the lowest eigenpair off ``locked``."""
    n = A.shape[0]
    m = min(m, n - locked.shape[1] - 1)
    keep = min(keep, m - 1)
    V = np.zeros((n, m + 1))
    T = np.zeros((m + 1, m + 1))
    v = rng.standard_normal(n)
    v = _orth(_orth(v, [locked]), [locked])
    V[:, 0] = v / np.linalg.norm(v)
    start = 0
    iters = 0
    norm_est = 0.0
    best = np.inf
    while True:
        beta = 0.0
        for j in range(start, m):
            w = A @ V[:, j]
            iters += 1
            w = _orth(w, [locked])
            Vj = V[:, :j + 1]
            c = Vj.T @ w
            w -= Vj @ c
            c2 = Vj.T @ w
            w -= Vj @ c2
            c += c2
            w = _orth(w, [locked])
            T[:j + 1, j] = c
            T[j, :j + 1] = c
            beta = np.linalg.norm(w)
            T[j + 1, j] = T[j, j + 1] = beta
            k = j + 1
            breakdown = beta <= 1e-13 * max(norm_est, abs(c[-1]), 1e-300)
            if breakdown or k == m or k % 10 == 0 or iters >= maxiter:
                theta, Y = np.linalg.eigh(T[:k, :k])
                norm_est = max(norm_est, float(np.abs(theta).max()))
                res = abs(beta * Y[k - 1, 0])
                best = min(best, res / norm_est)
                if res <= tol * norm_est or breakdown:
                    x = V[:, :k] @ Y[:, 0]
                    x /= np.linalg.norm(x)
                    return float(theta[0]), x, iters, norm_est
                if iters >= maxiter:
                    raise ConvergenceError(
                        f"Lanczos did not converge in {iters} iterations",
                        best)
            if breakdown:
                break
            V[:, j + 1] = w / beta
        # thick restart on the lowest Ritz vectors
        theta, Y = np.linalg.eigh(T[:m, :m])
        Vk = V[:, :m] @ Y[:, :keep]
        coupling = beta * Y[m - 1, :keep]
        last = V[:, m].copy()
        V[:] = 0.0
        V[:, :keep] = Vk
        V[:, keep] = last
        T[:] = 0.0
        T[:keep, :keep] = np.diag(theta[:keep])
        T[keep, :keep] = coupling
        T[:keep, keep] = coupling
        start = keep


def lowest_eigenpairs(A, k: int = 1, tol: float = REL_TOL,
                      maxiter: int = ITER_CAP, seed: int = 0,
                      basis: int = 60, keep: int = 20,
                      deflate_constants: bool = True) -> SpectrumResult:
    """``k`` smallest eigenvalues of ``A`` with the constants projected out.

    ``tol`` bounds ``||A v - lambda v|| / ||A||_est``; ``maxiter`` caps the
    total matrix-vector products over all runs.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    M = A.matrix if hasattr(A, "matrix") else A
    n = M.shape[0]
    if k + 2 > n:
        raise ValueError("too many eigenpairs requested for the matrix size")
    rng = np.random.default_rng(seed)
    locked = np.zeros((n, 0))
    if deflate_constants:
        locked = np.full((n, 1), 1 / np.sqrt(n))
    first = locked.shape[1]
    vals, runs = [], []
    total = 0
    norm_est = 0.0
    for _ in range(k):
        lam, x, its, est = _lanczos_lowest(M, locked, rng, tol,
                                           maxiter - total, basis, keep)
        total += its
        norm_est = max(norm_est, est)
        vals.append(lam)
        runs.append(its)
        locked = np.hstack([locked, x[:, None]])
    vecs = locked[:, first:]
    order = np.argsort(vals)
    vals = np.asarray(vals)[order]
    vecs = vecs[:, order]
    res = np.linalg.norm(M @ vecs - vecs * vals, axis=0) / norm_est
    return SpectrumResult(vals, vecs, res, total, norm_est,
                          "constants" if deflate_constants else "none", runs)


def rayleigh(A, u) -> float:
    """``<A u0, u0> / <u0, u0>`` with the mean removed from ``u``."""
    M = A.matrix if hasattr(A, "matrix") else A
    u0 = np.asarray(u, dtype=float) - np.mean(u)
    den = u0 @ u0
    if den <= 1e-300 * max(1.0, float(np.abs(u).max()) ** 2):
        raise ValueError("u is constant: zero denominator after centering")
    return float(u0 @ (M @ u0) / den)
