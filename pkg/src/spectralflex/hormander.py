"""Iterated commutators, bracket-span rank certificates and singular sets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import symexpr as se
from .vectorfield import ConstructionSpec, VectorField, lie_bracket

DEFAULT_WORD_CAP = 512
SV_TOL = 1e-6


class BracketCapExceeded(RuntimeError):
    pass


# -- words ------------------------------------------------------------------

@dataclass(frozen=True)
class BracketWord:
    """Binary bracket tree; leaves are generator indices."""

    tree: object

    @property
    def length(self) -> int:
        return _leaves(self.tree)

    def render(self, names: Sequence[str] | None = None) -> str:
        return _render(self.tree, names)

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def left_normed(cls, letters: Sequence[int]) -> "BracketWord":
        """``[X_a1, [X_a2, ... [X_a(L-1), X_aL]]]``."""
        tree = letters[-1]
        for a in reversed(letters[:-1]):
            tree = (a, tree)
        return cls(tree)

    def letters(self) -> tuple:
        out = []
        t = self.tree
        while isinstance(t, tuple):
            if isinstance(t[0], tuple):
                raise ValueError("not a left-normed word")
            out.append(t[0])
            t = t[1]
        return tuple(out) + (t,)


def _leaves(t) -> int:
    return _leaves(t[0]) + _leaves(t[1]) if isinstance(t, tuple) else 1


def _render(t, names) -> str:
    if isinstance(t, tuple):
        return f"[{_render(t[0], names)},{_render(t[1], names)}]"
    return names[t] if names else f"X{t}"


def count_left_normed_words(k: int, max_depth: int) -> int:
    """Number of left-normed words of length <= max_depth whose innermost
    bracket pairs two distinct generators (``[X, X]`` is dropped).

    For length 1 there are ``k`` words and for length L >= 2 there are
    ``k**(L-1) * (k-1)``; the total telescopes to ``k**max_depth``.
    """
    if k < 1 or max_depth < 1:
        raise ValueError("need k >= 1 and max_depth >= 1")
    return k ** max_depth if k > 1 else 1


def enumerate_words(k: int, max_depth: int) -> list[tuple]:
    """Letter sequences of the left-normed words, shortest first."""
    out = []
    for L in range(1, max_depth + 1):
        for letters in itertools.product(range(k), repeat=L):
            if L >= 2 and letters[-1] == letters[-2]:
                continue
            out.append(letters)
    return out


def structured_family(max_depth: int, v: int = 0, w: int = 1) -> list[tuple]:
    """Letters of ``D_V^a(W)`` and ``D_V^c D_W D_V^b(W)`` up to max_depth."""
    out = []
    for a in range(max_depth):
        out.append((v,) * a + (w,))
    for b in range(max_depth):
        for c in range(max_depth):
            if c + b + 2 > max_depth:
                continue
            letters = (v,) * c + (w,) + (v,) * b + (w,)
            if b == 0:
                continue  # [W, W] = 0
            out.append(letters)
    return out


def generate_brackets(generators: Sequence[VectorField], max_depth: int,
                      cap: int = DEFAULT_WORD_CAP,
                      structured: bool = True) -> list[tuple]:
    """All left-normed brackets up to ``max_depth`` as ``(word, field)``.

    With two generators ``(V, W)`` and ``structured=True`` the families
    ``D_V^a(W)`` and ``D_V^c D_W D_V^b(W)`` come first.  Zero fields and
    fields equal to an earlier one are dropped.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    k = len(generators)
    total = count_left_normed_words(k, max_depth)
    if total > cap:
        raise BracketCapExceeded(
            f"{total} words for {k} generators at depth {max_depth} "
            f"exceed the cap of {cap}")
    order = [(i,) for i in range(k)]
    if structured and k == 2:
        order.extend(structured_family(max_depth))
    seen_letters = set(order)
    for letters in enumerate_words(k, max_depth):
        if letters not in seen_letters:
            order.append(letters)
            seen_letters.add(letters)

    memo: dict = {}

    def build(letters: tuple) -> VectorField:
        f = memo.get(letters)
        if f is None:
            if len(letters) == 1:
                f = generators[letters[0]]
            else:
                f = lie_bracket(generators[letters[0]], build(letters[1:]))
            memo[letters] = f
        return f

    out = []
    seen_fields = set()
    for letters in order:
        f = build(letters)
        if f.is_zero() or f in seen_fields:
            continue
        seen_fields.add(f)
        out.append((BracketWord.left_normed(letters), f))
    return out


# -- rank certificates ------------------------------------------------------

@dataclass
class RankReport:
    points_sampled: int
    ranks: np.ndarray
    min_rank: int
    depth_used: int
    sv_threshold: float
    deficient_points: list
    ambient_dim: int
    min_relative_sv: float = float("nan")

    @property
    def full_rank(self) -> bool:
        return self.min_rank == self.ambient_dim

    def to_json(self) -> dict:
        return {
            "points_sampled": self.points_sampled,
            "min_rank": self.min_rank,
            "depth_used": self.depth_used,
            "sv_threshold": self.sv_threshold,
            "ambient_dim": self.ambient_dim,
            "min_relative_sv": self.min_relative_sv,
            "deficient_points": [
                {"point": list(map(float, p)), "rank": int(r)}
                for p, r in self.deficient_points],
        }


def field_matrix(fields: Sequence[VectorField], points) -> np.ndarray:
    """Shape ``(m, n, len(fields))``: column j holds field j at each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack([f(pts) for f in fields], axis=2)


def rank_report(fields: Sequence[VectorField], samples, tol: float = SV_TOL,
                depth: int = 0, chunk: int = 4096) -> RankReport:
    """Numerical rank of the span of ``fields`` at every sample point.

    A singular value counts if it exceeds ``tol * sigma_max`` at that point.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("no sample points")
    if not fields:
        raise ValueError("no fields")
    n = fields[0].dim
    ranks = np.empty(pts.shape[0], dtype=int)
    rel = np.empty(pts.shape[0])
    for s in range(0, pts.shape[0], chunk):
        mats = field_matrix(fields, pts[s:s + chunk])
        sv = np.linalg.svd(mats, compute_uv=False)
        smax = sv[:, :1]
        good = smax[:, 0] > 0
        r = np.where(good, (sv > tol * smax).sum(axis=1), 0)
        ranks[s:s + chunk] = r
        kth = sv[:, min(n, sv.shape[1]) - 1]
        rel[s:s + chunk] = np.where(good, kth / np.where(good, smax[:, 0], 1), 0)
    bad = np.nonzero(ranks < n)[0]
    return RankReport(
        points_sampled=int(pts.shape[0]),
        ranks=ranks,
        min_rank=int(ranks.min()),
        depth_used=int(depth),
        sv_threshold=float(tol),
        deficient_points=[(pts[i], ranks[i]) for i in bad],
        ambient_dim=n,
        min_relative_sv=float(rel.min()),
    )


def kronecker_points(count: int, n: int, offset: float = 0.5) -> np.ndarray:
    """Additive-recurrence (R_n) low-discrepancy points on the n-torus."""
    phi = 2.0
    for _ in range(64):
        phi = (1 + phi) ** (1.0 / (n + 1))
    alpha = (1.0 / phi) ** np.arange(1, n + 1)
    i = np.arange(1, count + 1)[:, None]
    return 2 * np.pi * np.mod(offset + i * alpha, 1.0)


def certify(spec: ConstructionSpec, max_depth: int = 6, count: int = 2000,
            singular: Optional["SingularReport"] = None,
            grid_points: Optional[np.ndarray] = None,
            tol: float = SV_TOL, seed: int = 0):
    """Bracket family rank report for the construction of ``spec``.

    Samples: low-discrepancy points, optional grid nodes, and a quarter of
    ``count`` placed on the detected singular locus when one exists.
    """
    words = generate_brackets(spec.fields, max_depth)
    pts = sample_points(spec.n, count, singular=singular, seed=seed)
    if grid_points is not None:
        pts = np.vstack([pts, grid_points])
    report = rank_report([f for _, f in words], pts, tol=tol,
                         depth=max(w.length for w, _ in words))
    return report, words, pts


def sample_points(n: int, count: int, singular=None, seed: int = 0):
    rng = np.random.default_rng(seed)
    n_sing = 0
    if singular is not None and singular.common_roots is not None \
            and len(singular.common_roots):
        n_sing = count // 4
    pts = kronecker_points(count - n_sing, n, offset=rng.uniform())
    if n_sing:
        extra = rng.uniform(0, 2 * np.pi, (n_sing, n))
        extra[:, 0] = np.resize(singular.common_roots, n_sing)
        pts = np.vstack([pts, extra])
    return pts


# -- singular set -----------------------------------------------------------

@dataclass
class SingularReport:
    """Zero locus of W.  W never depends on y, so fibers are indexed by z."""

    generic_dim: int
    fiber_roots: dict
    common_roots: Optional[np.ndarray]
    grid_fraction: float
    refined_fraction: float
    grid_N: int
    tol: float
    newton_fallbacks: int = 0
    max_root_residual: float = 0.0
    diagnostics: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return all(len(r) == 0 for r in self.fiber_roots.values())

    @property
    def fraction_decreasing(self) -> bool:
        return self.empty or self.refined_fraction < self.grid_fraction

    def distance(self, points) -> np.ndarray:
        """Torus distance to the zero locus along x.

        Exact when the roots are common to all fibers (the locus is a union
        of coordinate planes); otherwise the in-fiber distance of the nearest
        sampled fiber, which bounds the true distance from above.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.empty:
            return np.full(pts.shape[0], np.inf)
        if self.common_roots is not None:
            return _circle_distance(pts[:, 0], self.common_roots)
        h = 2 * np.pi / self.grid_N
        out = np.empty(pts.shape[0])
        for i, p in enumerate(pts):
            key = tuple(int(round(c / h)) % self.grid_N for c in p[2:])
            roots = self.fiber_roots.get(key, ())
            out[i] = _circle_distance(p[:1], np.asarray(roots))[0] \
                if len(roots) else np.inf
        return out

    def max_distance(self) -> float:
        """Largest possible distance from a point to the locus."""
        if self.empty:
            return np.inf
        best = np.inf
        for roots in self.fiber_roots.values():
            if len(roots) == 0:
                return np.inf
            r = np.sort(np.mod(roots, 2 * np.pi))
            gaps = np.diff(np.concatenate([r, [r[0] + 2 * np.pi]]))
            best = min(best, gaps.max() / 2)
        return float(best)

    def to_json(self) -> dict:
        return {
            "generic_dim": self.generic_dim,
            "empty": self.empty,
            "common_roots": (None if self.common_roots is None
                             else [float(r) for r in self.common_roots]),
            "fibers": len(self.fiber_roots),
            "grid_N": self.grid_N,
            "grid_fraction": self.grid_fraction,
            "refined_fraction": self.refined_fraction,
            "fraction_decreasing": self.fraction_decreasing,
            "tol": self.tol,
            "newton_fallbacks": self.newton_fallbacks,
            "max_root_residual": self.max_root_residual,
        }


def _circle_distance(x: np.ndarray, roots: np.ndarray) -> np.ndarray:
    d = np.abs(np.mod(x[:, None] - roots[None, :] + np.pi, 2 * np.pi) - np.pi)
    return d.min(axis=1)


def _fiber_roots(spec, z, per_fiber: int, tol: float, newton_steps: int = 50):
    """Roots of W(x, z) = 0 in x for each row of ``z``.

    Dense sampling finds candidate minima of |W|^2; Newton on its derivative
    refines them and bisection on sign changes is the fallback.
    """
    V, W = spec.fields
    f = se.add(*[se.mul(c, c) for c in W.coeffs])
    df = se.diff(f, 0)
    ddf = se.diff(df, 0)
    dW = [se.diff(c, 0) for c in W.coeffs]
    nz = z.shape[0]
    xs = np.linspace(0, 2 * np.pi, per_fiber, endpoint=False)
    dx = xs[1] - xs[0]
    pts = np.zeros((nz * per_fiber, spec.n))
    pts[:, 0] = np.tile(xs, nz)
    pts[:, 2:] = np.repeat(z, per_fiber, axis=0)
    fv = se.evaluate(f, pts).reshape(nz, per_fiber)
    gmax = np.sqrt(sum(se.evaluate(c, pts) ** 2 for c in dW)).reshape(
        nz, per_fiber).max(axis=1)
    norm = np.sqrt(np.maximum(fv, 0))
    left = np.roll(fv, 1, axis=1)
    right = np.roll(fv, -1, axis=1)
    cand = (fv <= left) & (fv <= right) & (norm <= (gmax * dx)[:, None])

    roots = [[] for _ in range(nz)]
    fallbacks = 0
    worst = 0.0
    fi, xi = np.nonzero(cand)
    if fi.size == 0:
        return roots, fallbacks, worst
    p = np.zeros((fi.size, spec.n))
    p[:, 0] = xs[xi]
    p[:, 2:] = z[fi]
    lo = p[:, 0] - dx
    hi = p[:, 0] + dx
    for _ in range(newton_steps):
        g1 = se.evaluate(df, p)
        g2 = se.evaluate(ddf, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(g2 > 0, g1 / g2, 0.0)
        p[:, 0] -= step
        if np.all(np.abs(step) < 1e-15):
            break
    diverged = (p[:, 0] < lo) | (p[:, 0] > hi) | ~np.isfinite(p[:, 0])
    for c in np.nonzero(diverged)[0]:
        fallbacks += 1
        p[c, 0] = _bisect(df, p[c].copy(), lo[c], hi[c])
    res = np.sqrt(np.maximum(se.evaluate(f, p), 0))
    for c in range(fi.size):
        if res[c] < tol:
            roots[fi[c]].append(float(np.mod(p[c, 0], 2 * np.pi)))
            worst = max(worst, float(res[c]))
    roots = [_dedupe(r) for r in roots]
    return roots, fallbacks, worst


def _bisect(df, point, lo, hi, steps: int = 200) -> float:
    def g(x):
        point[0] = x
        return se.evaluate(df, point)
    a, b = lo, hi
    ga, gb = g(a), g(b)
    if ga * gb > 0:
        return np.nan
    for _ in range(steps):
        m = 0.5 * (a + b)
        gm = g(m)
        if ga * gm <= 0:
            b, gb = m, gm
        else:
            a, ga = m, gm
        if b - a < 1e-15:
            break
    return 0.5 * (a + b)


def _dedupe(roots, eps: float = 1e-9) -> list:
    out = []
    for r in sorted(roots):
        if not out or min(abs(r - out[-1]), 2 * np.pi - abs(r - out[-1])) > eps:
            out.append(r)
    if len(out) > 1 and 2 * np.pi - (out[-1] - out[0]) <= eps:
        out.pop()
    return out


def zero_fraction(spec: ConstructionSpec, N: int, tol: float) -> float:
    """Fraction of nodes of the N-per-axis grid where |W| < tol.

    W is independent of y, so the y axis is dropped from the count.
    """
    axes = np.arange(N) * (2 * np.pi / N)
    mesh = np.meshgrid(*([axes] + [axes] * (spec.n - 2)), indexing="ij")
    pts = np.zeros((mesh[0].size, spec.n))
    pts[:, 0] = mesh[0].ravel()
    for i, m in enumerate(mesh[1:], start=2):
        pts[:, i] = m.ravel()
    V, W = spec.fields
    norm = np.sqrt((W(pts) ** 2).sum(axis=1))
    return float(np.count_nonzero(norm < tol)) / norm.size


def find_singular_set(spec: ConstructionSpec, N: int, tol: float = 1e-8,
                      per_fiber: Optional[int] = None) -> SingularReport:
    """Locate ``{W = 0}`` fiber by fiber over the z-nodes of an N-grid."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    per_fiber = per_fiber or 64 * spec.d
    axes = np.arange(N) * (2 * np.pi / N)
    zmesh = np.meshgrid(*([axes] * (spec.n - 2)), indexing="ij")
    z = np.stack([m.ravel() for m in zmesh], axis=1)
    keys = list(itertools.product(range(N), repeat=spec.n - 2))
    roots, fallbacks, worst = _fiber_roots(spec, z, per_fiber, tol)
    fiber_roots = {k: np.asarray(r) for k, r in zip(keys, roots)}

    common = None
    first = roots[0]
    if all(len(r) == len(first) and np.allclose(r, first, atol=1e-8)
           for r in roots):
        common = np.asarray(first, dtype=float)

    V, W = spec.fields
    probe = kronecker_points(256, spec.n)
    generic = int(np.median(rank_report([V, W], probe).ranks))
    diagnostics = []
    if fallbacks:
        diagnostics.append(f"newton fell back to bisection {fallbacks} times")
    return SingularReport(
        generic_dim=generic,
        fiber_roots=fiber_roots,
        common_roots=common,
        grid_fraction=zero_fraction(spec, N, tol),
        refined_fraction=zero_fraction(spec, 2 * N, tol),
        grid_N=N,
        tol=tol,
        newton_fallbacks=fallbacks,
        max_root_residual=worst,
        diagnostics=diagnostics,
    )
